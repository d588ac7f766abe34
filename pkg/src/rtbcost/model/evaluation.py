"""Cross-validated evaluation, variance filtering and feature-group selection."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .encoding import FeatureEncoder
from .forest import ForestParams, fit_encoded
from .metrics import EvalMetrics, confusion_matrix, metrics_from_confusion, weighted_auc_ovr


class InsufficientClassSupport(ValueError):
    pass


def stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per sample; each class is dealt round-robin after shuffling."""
    fold_of = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        fold_of[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return fold_of


def evaluate_encoded(X: np.ndarray, y: np.ndarray, encoder: FeatureEncoder, params: ForestParams,
                     folds: int = 10, runs: int = 10, seed: int = 0,
                     n_classes: int | None = None) -> EvalMetrics:
    """Repeated stratified k-fold CV.

    Out-of-fold predictions are pooled over all folds and runs into one
    confusion matrix (rows sum to ``runs`` x class support); AUC and OOB
    error are averaged over runs.
    """
    y = np.asarray(y, dtype=np.int32)
    k = int(n_classes if n_classes is not None else y.max() + 1)
    support = np.bincount(y, minlength=k)
    present = support[support > 0]
    if present.size < 2 or present.min() < folds:
        raise InsufficientClassSupport(f"every class needs >= {folds} samples, got {support.tolist()}")
    cm = np.zeros((k, k), dtype=np.int64)
    aucs, oobs = [], []
    for run in range(runs):
        rng = np.random.default_rng([seed, run])
        fold_of = stratified_folds(y, folds, rng)
        scores = np.zeros((len(y), k))
        pred = np.zeros(len(y), dtype=np.int64)
        for f in range(folds):
            test = fold_of == f
            train = ~test
            model = fit_encoded(X[train], y[train], encoder, params, seed=seed * 1000 + run * folds + f,
                                n_classes=k)
            pred[test] = model.predict_codes(X[test])
            scores[test] = model.proba_codes(X[test])
            if model.oob_error is not None:
                oobs.append(model.oob_error)
        cm += confusion_matrix(y, pred, k)
        aucs.append(weighted_auc_ovr(y, scores))
    return metrics_from_confusion(cm, float(np.mean(aucs)), float(np.mean(oobs)) if oobs else None)


def evaluate(rows: Sequence[tuple[Any, int]], params: ForestParams | None = None, folds: int = 10,
             runs: int = 10, seed: int = 0, categorical: Sequence[str] | None = None,
             numeric: Sequence[str] | None = None) -> EvalMetrics:
    from ..features.vector import CoreFeatures

    feats = [f.to_dict() if hasattr(f, "to_dict") else f for f, _ in rows]
    y = np.array([c for _, c in rows], dtype=np.int32)
    if categorical is None:
        categorical, numeric = CoreFeatures.CATEGORICAL, CoreFeatures.NUMERIC
    enc = FeatureEncoder.fit(feats, categorical, numeric or (), int_levels={"hour_of_day": 24})
    return evaluate_encoded(enc.encode(feats), y, enc, params or ForestParams(), folds, runs, seed)


def variance_filter(columns: Mapping[str, Sequence[float]], percentile: float = 99.0) -> list[str]:
    """Drop constant columns and those whose coefficient of variation is above
    the given percentile of all columns' coefficients."""
    cv: dict[str, float] = {}
    for name, vals in columns.items():
        v = np.asarray(vals, dtype=float)
        v = v[np.isfinite(v)]
        if v.size == 0 or np.all(v == v[0]):
            continue
        mean, std = abs(v.mean()), v.std()
        cv[name] = std / mean if mean > 0 else np.inf
    if not cv:
        return []
    finite = np.array([c for c in cv.values() if np.isfinite(c)])
    cut = np.percentile(finite, percentile) if finite.size else np.inf
    return [name for name, c in cv.items() if c <= cut]


@dataclass
class SubsetResult:
    groups: tuple[str, ...]
    features: tuple[str, ...]
    precision: float
    recall: float
    auc_roc: float
    precision_loss: float
    recall_loss: float


@dataclass
class FeatureSelectionReport:
    groups: dict[str, tuple[str, ...]]
    baseline: EvalMetrics
    candidates: list[SubsetResult] = field(default_factory=list)
    chosen: tuple[str, ...] = ()
    chosen_features: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "groups": {k: list(v) for k, v in self.groups.items()},
            "baseline": self.baseline.to_dict(),
            "candidates": [c.__dict__ | {"groups": list(c.groups), "features": list(c.features)}
                           for c in self.candidates],
            "chosen": list(self.chosen),
            "chosen_features": list(self.chosen_features),
        }


MAX_PRECISION_LOSS = 0.02
MAX_RECALL_LOSS = 0.06
CHANCE_MARGIN = 0.05


def select_features(rows: Sequence[Mapping[str, Any]], labels: Sequence[int],
                    groups: Mapping[str, Sequence[str]], params: ForestParams | None = None,
                    folds: int = 5, runs: int = 1, seed: int = 0,
                    max_exhaustive: int = 8) -> FeatureSelectionReport:
    """Pick the smallest group combination whose CV precision/recall stay within
    2 / 6 points of the full feature set.

    All non-empty group combinations are tried when there are at most
    ``max_exhaustive`` groups, otherwise single groups and pairs. If the
    full set is no better than chance the full set is kept.
    """
    params = params or ForestParams(n_trees=30)
    y = np.asarray(labels, dtype=np.int32)
    k = int(y.max() + 1)
    groups = {g: tuple(f for f in fs if f in rows[0]) for g, fs in groups.items()}
    groups = {g: fs for g, fs in groups.items() if fs}

    def fit_eval(fields: Sequence[str]) -> EvalMetrics:
        cat = [f for f in fields if _is_categorical(rows, f)]
        num = [f for f in fields if f not in cat]
        enc = FeatureEncoder.fit(rows, cat, num)
        return evaluate_encoded(enc.encode(rows), y, enc, params, folds, runs, seed, n_classes=k)

    all_fields = tuple(f for fs in groups.values() for f in fs)
    base = fit_eval(all_fields)
    report = FeatureSelectionReport(groups=dict(groups), baseline=base, chosen=tuple(groups),
                                    chosen_features=all_fields)

    names = sorted(groups)
    if len(names) <= max_exhaustive:
        combos = [c for r in range(1, len(names)) for c in itertools.combinations(names, r)]
    else:
        combos = [c for r in (1, 2) for c in itertools.combinations(names, r)]
    for combo in combos:
        fields = tuple(f for g in combo for f in groups[g])
        m = fit_eval(fields)
        report.candidates.append(SubsetResult(combo, fields, m.precision, m.recall, m.auc_roc,
                                              base.precision - m.precision, base.recall - m.recall))

    chance = np.bincount(y, minlength=k).max() / len(y)
    if base.precision <= chance + CHANCE_MARGIN:
        return report
    ok = [c for c in report.candidates
          if c.precision_loss < MAX_PRECISION_LOSS and c.recall_loss < MAX_RECALL_LOSS]
    if ok:
        best = min(ok, key=lambda c: (len(c.features), len(c.groups), -c.precision, c.groups))
        report.chosen, report.chosen_features = best.groups, best.features
    return report


def _is_categorical(rows: Sequence[Mapping[str, Any]], f: str) -> bool:
    for r in rows:
        v = r.get(f)
        if v is not None:
            return isinstance(v, str)
    return True
