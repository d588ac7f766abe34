"""Random forest of Gini classification trees over encoded feature rows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .encoding import FeatureEncoder


class SingleClassData(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 5
    features_per_split: int | None = None  # default: ceil(sqrt(encoded dims))

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "features_per_split": self.features_per_split}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ForestParams:
        unknown = set(d) - {"n_trees", "max_depth", "min_leaf", "features_per_split"}
        if unknown:
            raise ValueError(f"unknown forest hyperparameters {sorted(unknown)}")
        return cls(**d)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class frequencies

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def distribution(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.distribution(X), axis=1)

    def to_dict(self) -> dict:
        leaves = self.feature < 0
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            # only leaf distributions matter for prediction
            "value": [row.tolist() if leaf else [] for row, leaf in zip(self.value, leaves)],
        }

    @classmethod
    def from_dict(cls, d: dict, n_classes: int) -> Tree:
        value = np.zeros((len(d["feature"]), n_classes))
        for i, row in enumerate(d["value"]):
            if row:
                value[i] = row
        return cls(
            np.asarray(d["feature"], dtype=np.int32),
            np.asarray(d["threshold"], dtype=np.int32),
            np.asarray(d["left"], dtype=np.int32),
            np.asarray(d["right"], dtype=np.int32),
            value,
        )


@dataclass
class RandomForestModel:
    encoder: FeatureEncoder
    trees: list[Tree]
    n_classes: int
    params: ForestParams
    seed: int
    oob_error: float | None = None
    meta: dict = field(default_factory=dict)

    def encode(self, rows: Iterable[Mapping[str, Any]]) -> np.ndarray:
        return self.encoder.encode(rows)

    def tree_votes(self, X: np.ndarray) -> np.ndarray:
        """Per-tree predicted class, shape ``(n_trees, n_rows)``."""
        return np.stack([t.predict(X) for t in self.trees]) if self.trees else np.zeros((0, len(X)), int)

    def predict_codes(self, X: np.ndarray) -> np.ndarray:
        votes = self.tree_votes(X)
        tally = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        for v in votes:
            tally[np.arange(X.shape[0]), v] += 1
        # argmax picks the lowest class id among ties
        return np.argmax(tally, axis=1)

    def proba_codes(self, X: np.ndarray) -> np.ndarray:
        acc = np.zeros((X.shape[0], self.n_classes))
        for t in self.trees:
            acc += t.distribution(X)
        return acc / max(len(self.trees), 1)

    def predict(self, rows: Iterable[Mapping[str, Any]]) -> np.ndarray:
        return self.predict_codes(self.encode(rows))

    def predict_proba(self, rows: Iterable[Mapping[str, Any]]) -> np.ndarray:
        return self.proba_codes(self.encode(rows))


def _tree_seed(seed: int, t: int) -> tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence([int(seed), int(t)])
    boot_rng = np.random.default_rng(ss)
    node_seed = int(ss.generate_state(1, np.uint64)[0])
    return boot_rng, node_seed


def fit_encoded(X: np.ndarray, y: np.ndarray, encoder: FeatureEncoder, params: ForestParams,
                seed: int, n_classes: int | None = None, backend: str | None = None) -> RandomForestModel:
    y = np.asarray(y, dtype=np.int32)
    if len(np.unique(y)) < 2:
        raise SingleClassData("need at least two classes to fit a forest")
    k = int(n_classes if n_classes is not None else y.max() + 1)
    build = kernels.build_tree if backend is None else kernels.get_backend(backend)[0]
    n, m = X.shape
    mtry = params.features_per_split or max(1, math.ceil(math.sqrt(m)))
    max_depth = -1 if params.max_depth is None else params.max_depth
    levels = encoder.n_levels
    X = np.ascontiguousarray(X, dtype=np.uint8)

    trees = []
    oob_acc = np.zeros((n, k))
    oob_hit = np.zeros(n, dtype=bool)
    for t in range(params.n_trees):
        boot_rng, node_seed = _tree_seed(seed, t)
        sample = boot_rng.integers(0, n, size=n)
        tree = Tree(*build(X, y, sample, k, levels, max_depth, params.min_leaf, mtry, node_seed))
        trees.append(tree)
        oob = np.ones(n, dtype=bool)
        oob[sample] = False
        if oob.any():
            oob_acc[oob] += tree.distribution(X[oob])
            oob_hit |= oob
    oob_error = None
    if oob_hit.any():
        oob_error = float(np.mean(np.argmax(oob_acc[oob_hit], axis=1) != y[oob_hit]))
    return RandomForestModel(encoder, trees, k, params, seed, oob_error)


def _as_mapping(row: Any) -> Mapping[str, Any]:
    return row.to_dict() if hasattr(row, "to_dict") else row


def fit_forest(rows: Sequence[tuple[Any, int]], params: ForestParams | None = None, seed: int = 0,
               categorical: Sequence[str] | None = None, numeric: Sequence[str] | None = None,
               n_classes: int | None = None, backend: str | None = None) -> RandomForestModel:
    """Fit on ``(features, class)`` pairs; features are CoreFeatures or mappings."""
    from ..features.vector import CoreFeatures

    params = params or ForestParams()
    feats = [_as_mapping(f) for f, _ in rows]
    labels = np.array([c for _, c in rows], dtype=np.int32)
    if categorical is None:
        categorical = CoreFeatures.CATEGORICAL
        numeric = CoreFeatures.NUMERIC if numeric is None else numeric
    numeric = numeric or ()
    encoder = FeatureEncoder.fit(feats, categorical, numeric, int_levels={"hour_of_day": 24})
    return fit_encoded(encoder.encode(feats), labels, encoder, params, seed, n_classes, backend)
