"""Binning plus forest training on labelled (features, cleartext CPM) rows."""

from __future__ import annotations

from typing import Any, Sequence

from .binning import fit_binning, log_normalize
from .forest import ForestParams, fit_forest
from .io import PriceModel


def train_price_model(rows: Sequence[tuple[Any, Any]], k: int = 4, params: ForestParams | None = None,
                      seed: int = 0, allow_degenerate: bool = False) -> PriceModel:
    prices = [float(p) for _, p in rows]
    binning = fit_binning(log_normalize(prices), k=k, allow_degenerate=allow_degenerate)
    classes = binning.classes_of(prices)
    forest = fit_forest([(f, int(c)) for (f, _), c in zip(rows, classes)], params, seed=seed,
                        n_classes=binning.k)
    forest.meta = {"n_samples": len(rows), "k": binning.k}
    return PriceModel(forest, binning)
