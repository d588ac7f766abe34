"""Encoding of feature rows into the uint8 code matrix used by the tree kernels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

OTHER = "other"
MAX_LEVELS = 256


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    """One encoded column.

    ``kind`` is ``"onehot"`` (indicator of ``field == level``), ``"int"`` (small
    integer used as-is, ``levels`` distinct values) or ``"quantile"``
    (numeric value bucketed by ``edges``).
    """

    field: str
    kind: str
    level: str | None = None
    levels: int = 2
    edges: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"field": self.field, "kind": self.kind, "levels": self.levels}
        if self.level is not None:
            d["level"] = self.level
        if self.edges:
            d["edges"] = list(self.edges)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Column:
        return cls(d["field"], d["kind"], d.get("level"), int(d["levels"]), tuple(d.get("edges", ())))


class FeatureEncoder:
    """Maps feature mappings to a code matrix; unknown categories fall to ``other``."""

    def __init__(self, columns: Sequence[Column], categorical: Sequence[str], numeric: Sequence[str]):
        self.columns = list(columns)
        self.categorical = list(categorical)
        self.numeric = list(numeric)
        self._levels: dict[str, dict[str, int]] = {}
        for j, c in enumerate(self.columns):
            if c.kind == "onehot":
                self._levels.setdefault(c.field, {})[c.level] = j
        self._numeric_cols = [(j, c) for j, c in enumerate(self.columns) if c.kind != "onehot"]

    @property
    def fields(self) -> list[str]:
        return self.categorical + self.numeric

    @property
    def n_levels(self) -> np.ndarray:
        return np.array([c.levels for c in self.columns], dtype=np.int64)

    @classmethod
    def fit(cls, rows: Iterable[Mapping[str, Any]], categorical: Sequence[str],
            numeric: Sequence[str], max_bins: int = 32,
            int_levels: Mapping[str, int] | None = None) -> FeatureEncoder:
        rows = list(rows)
        int_levels = dict(int_levels or {})
        cols: list[Column] = []
        for f in categorical:
            levels = sorted({str(r[f]) for r in rows if r.get(f) is not None} | {OTHER})
            cols.extend(Column(f, "onehot", lv) for lv in levels)
        for f in numeric:
            if f in int_levels:
                cols.append(Column(f, "int", levels=int_levels[f]))
                continue
            vals = np.array([float(r[f]) for r in rows if r.get(f) is not None], dtype=float)
            if vals.size and np.all(vals == np.round(vals)) and vals.min() >= 0 and vals.max() < MAX_LEVELS:
                cols.append(Column(f, "int", levels=int(vals.max()) + 1))
            else:
                qs = np.unique(np.quantile(vals, np.linspace(0, 1, max_bins + 1)[1:-1])) if vals.size else []
                cols.append(Column(f, "quantile", levels=len(qs) + 1, edges=tuple(float(q) for q in qs)))
        return cls(cols, categorical, numeric)

    def encode(self, rows: Iterable[Mapping[str, Any]]) -> np.ndarray:
        rows = list(rows)
        X = np.zeros((len(rows), len(self.columns)), dtype=np.uint8)
        for f in self.categorical:
            idx = self._levels[f]
            other = idx[OTHER]
            for i, r in enumerate(rows):
                if f not in r:
                    raise SchemaMismatch(f"row lacks feature {f!r}")
                v = r[f]
                X[i, idx.get(str(v), other) if v is not None else other] = 1
        for j, c in self._numeric_cols:
            try:
                vals = np.array([np.nan if r[c.field] is None else float(r[c.field]) for r in rows], dtype=float)
            except KeyError:
                raise SchemaMismatch(f"row lacks feature {c.field!r}") from None
            vals = np.nan_to_num(vals, nan=0.0)
            if c.kind == "int":
                X[:, j] = np.clip(np.round(vals), 0, c.levels - 1).astype(np.uint8)
            else:
                X[:, j] = np.searchsorted(np.asarray(c.edges), vals, side="right").astype(np.uint8)
        return X

    def to_dict(self) -> dict:
        return {
            "categorical": self.categorical,
            "numeric": self.numeric,
            "columns": [c.to_dict() for c in self.columns],
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureEncoder:
        return cls([Column.from_dict(c) for c in d["columns"]], d["categorical"], d["numeric"])
