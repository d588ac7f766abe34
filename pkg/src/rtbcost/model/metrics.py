"""Support-weighted multiclass metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


def confusion_matrix(y_true, y_pred, k: int) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm


def per_class_rates(cm: np.ndarray) -> dict[str, np.ndarray]:
    cm = np.asarray(cm, dtype=float)
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    total = cm.sum()
    fp = predicted - tp
    negatives = total - support
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        fpr = np.where(negatives > 0, fp / negatives, 0.0)
    return {"precision": precision, "recall": recall, "fp_rate": fpr, "support": support}


def weighted(values: np.ndarray, support: np.ndarray) -> float:
    s = support.sum()
    return float(np.dot(values, support) / s) if s else 0.0


def binary_auc(scores, positive) -> float:
    """ROC AUC via the rank-sum statistic (ties count one half)."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(len(s))
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        ranks[i:j + 1] = 0.5 * (i + j) + 1
        i = j + 1
    r = np.empty(len(s))
    r[order] = ranks
    return float((r[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def weighted_auc_ovr(y_true, scores: np.ndarray) -> float:
    """One-vs-rest AUC per class, averaged with class-support weights."""
    y_true = np.asarray(y_true, dtype=int)
    scores = np.asarray(scores, dtype=float)
    k = scores.shape[1]
    aucs, supports = [], []
    for c in range(k):
        pos = y_true == c
        if pos.sum() == 0:
            continue
        a = binary_auc(scores[:, c], pos)
        if np.isnan(a):
            continue
        aucs.append(a)
        supports.append(pos.sum())
    return weighted(np.array(aucs), np.array(supports, dtype=float)) if aucs else float("nan")


@dataclass
class EvalMetrics:
    tp_rate: float
    fp_rate: float
    precision: float
    recall: float
    accuracy: float
    auc_roc: float
    oob_error: float | None
    confusion: list[list[int]]
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def metrics_from_confusion(cm: np.ndarray, auc_roc: float = float("nan"),
                           oob_error: float | None = None) -> EvalMetrics:
    r = per_class_rates(cm)
    sup = r["support"]
    recall = weighted(r["recall"], sup)
    total = cm.sum()
    return EvalMetrics(
        tp_rate=recall,
        fp_rate=weighted(r["fp_rate"], sup),
        precision=weighted(r["precision"], sup),
        recall=recall,
        accuracy=float(np.trace(cm) / total) if total else 0.0,
        auc_roc=auc_roc,
        oob_error=oob_error,
        confusion=np.asarray(cm, dtype=int).tolist(),
        per_class={k: v.tolist() for k, v in r.items()},
    )
