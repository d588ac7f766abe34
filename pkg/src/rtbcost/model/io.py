"""Model wire format and the PriceModel used for encrypted-price estimation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .binning import PriceBinning
from .encoding import FeatureEncoder
from .forest import ForestParams, RandomForestModel, Tree

SCHEMA_VERSION = 1


class VersionMismatch(ValueError):
    pass


class CorruptModel(ValueError):
    pass


def _features_dict(s: Any) -> Mapping[str, Any]:
    return s.to_dict() if hasattr(s, "to_dict") else s


@dataclass
class PriceModel:
    """A trained forest paired with the binning whose classes it predicts."""

    forest: RandomForestModel
    binning: PriceBinning

    def __post_init__(self):
        if self.forest.n_classes != self.binning.k:
            raise ValueError(f"forest has {self.forest.n_classes} classes, binning {self.binning.k}")

    def predict_class(self, s: Any) -> int:
        return int(self.forest.predict([_features_dict(s)])[0])

    def predict_classes(self, rows) -> np.ndarray:
        return self.forest.predict([_features_dict(r) for r in rows])

    def estimate_price(self, s: Any) -> float:
        return self.binning.representatives[self.predict_class(s)]

    def estimate(self, notification: Any, core: Any) -> float:
        return self.estimate_price(core)


def predict_class(m: PriceModel, s: Any) -> int:
    return m.predict_class(s)


def estimate_price(m: PriceModel, s: Any) -> float:
    return m.estimate_price(s)


def model_to_dict(m: RandomForestModel, binning: PriceBinning) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "feature_schema": m.encoder.to_dict(),
        "binning": binning.to_dict(),
        "n_classes": m.n_classes,
        "params": m.params.to_dict(),
        "seed": m.seed,
        "training_meta": {"oob_error": m.oob_error, **m.meta},
        "trees": [t.to_dict() for t in m.trees],
    }


def export_model(m: RandomForestModel | PriceModel, binning: PriceBinning | None = None,
                 path: str | Path | None = None) -> bytes:
    """Serialize to canonical JSON bytes (sorted keys); optionally write to ``path``."""
    if isinstance(m, PriceModel):
        binning = binning or m.binning
        m = m.forest
    if binning is None:
        raise ValueError("a binning is required")
    data = json.dumps(model_to_dict(m, binning), sort_keys=True, separators=(",", ":")).encode()
    if path is not None:
        Path(path).write_bytes(data)
    return data


def checksum(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _check_tree(t: Tree, n_features: int, k: int) -> None:
    n = t.n_nodes
    internal = t.feature >= 0
    if n == 0 or np.any(t.feature >= n_features):
        raise CorruptModel("tree references a feature outside the schema")
    for arr in (t.left, t.right):
        if np.any(arr[internal] <= 0) or np.any(arr[internal] >= n):
            raise CorruptModel("child index out of range")
    sums = t.value[~internal].sum(axis=1)
    if not np.allclose(sums, 1.0, atol=1e-9):
        raise CorruptModel("leaf distribution does not sum to 1")


def import_model(src: str | Path | bytes) -> PriceModel:
    if isinstance(src, (bytes, bytearray)):
        raw = bytes(src)
    else:
        raw = Path(src).read_bytes()
    try:
        d = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptModel(f"unreadable model file: {e}") from None
    if not isinstance(d, dict):
        raise CorruptModel("model document must be a JSON object")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise VersionMismatch(f"model schema_version {d.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    try:
        encoder = FeatureEncoder.from_dict(d["feature_schema"])
        binning = PriceBinning.from_dict(d["binning"])
        k = int(d["n_classes"])
        trees = [Tree.from_dict(t, k) for t in d["trees"]]
        meta = dict(d.get("training_meta") or {})
        oob = meta.pop("oob_error", None)
        forest = RandomForestModel(encoder, trees, k, ForestParams.from_dict(d["params"]),
                                   int(d["seed"]), oob, meta)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptModel(f"malformed model document: {e!r}") from None
    for t in trees:
        _check_tree(t, len(encoder.columns), k)
    return PriceModel(forest, binning)
