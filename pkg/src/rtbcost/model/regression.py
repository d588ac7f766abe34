"""Optional regression forest on log-CPM (not the default estimator).

Charge prices are too dispersed for point regression to beat the class
model; this exists for comparison runs only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .encoding import FeatureEncoder
from .forest import ForestParams


@dataclass
class RegressionTree:
    feature: list[int] = field(default_factory=list)
    threshold: list[int] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        for i, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if row[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[i] = self.value[node]
        return out


def _grow(X: np.ndarray, y: np.ndarray, levels: np.ndarray, params: ForestParams, mtry: int,
          rng: np.random.Generator) -> RegressionTree:
    tree = RegressionTree()
    max_depth = params.max_depth if params.max_depth is not None else 1 << 30
    stack = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        node = len(tree.feature)
        if parent >= 0:
            (tree.right if is_right else tree.left)[parent] = node
        tree.feature.append(-1)
        tree.threshold.append(0)
        tree.left.append(-1)
        tree.right.append(-1)
        yy = y[idx]
        tree.value.append(float(yy.mean()))
        n = len(idx)
        if depth >= max_depth or n < 2 * params.min_leaf or np.all(yy == yy[0]):
            continue
        best = (yy.sum() ** 2 / n, -1, 0)
        for f in rng.permutation(X.shape[1])[:mtry]:
            col = X[idx, f]
            L = int(levels[f])
            cnt = np.bincount(col, minlength=L)[:L].astype(float)
            s = np.bincount(col, weights=yy, minlength=L)[:L]
            cc, cs = np.cumsum(cnt)[:-1], np.cumsum(s)[:-1]
            rc, rs = n - cc, s.sum() - cs
            ok = (cc >= params.min_leaf) & (rc >= params.min_leaf) & (cnt[:-1] > 0)
            if not ok.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                score = np.where(ok, cs ** 2 / cc + rs ** 2 / rc, -np.inf)
            t = int(np.argmax(score))
            if score[t] > best[0] + 1e-12:
                best = (score[t], int(f), t)
        if best[1] < 0:
            continue
        f, t = best[1], best[2]
        tree.feature[node], tree.threshold[node] = f, t
        go_left = X[idx, f] <= t
        stack.append((idx[~go_left], depth + 1, node, True))
        stack.append((idx[go_left], depth + 1, node, False))
    return tree


@dataclass
class RegressionForest:
    encoder: FeatureEncoder
    trees: list[RegressionTree]

    def predict_log(self, rows: Sequence[Mapping[str, Any]]) -> np.ndarray:
        X = self.encoder.encode(rows)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def estimate_price(self, s: Any) -> float:
        row = s.to_dict() if hasattr(s, "to_dict") else s
        return float(math.exp(self.predict_log([row])[0]))

    def estimate(self, notification: Any, core: Any) -> float:
        return self.estimate_price(core)


def fit_regression_forest(rows: Sequence[tuple[Any, float]], params: ForestParams | None = None,
                          seed: int = 0, categorical: Sequence[str] | None = None,
                          numeric: Sequence[str] | None = None) -> RegressionForest:
    """Fit on ``(features, cpm)`` pairs; trees regress log-CPM."""
    from ..features.vector import CoreFeatures

    params = params or ForestParams(n_trees=30)
    feats = [f.to_dict() if hasattr(f, "to_dict") else f for f, _ in rows]
    y = np.log(np.array([p for _, p in rows], dtype=float))
    if categorical is None:
        categorical, numeric = CoreFeatures.CATEGORICAL, CoreFeatures.NUMERIC
    enc = FeatureEncoder.fit(feats, categorical, numeric or (), int_levels={"hour_of_day": 24})
    X = enc.encode(feats)
    mtry = params.features_per_split or max(1, X.shape[1] // 3)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(params.n_trees):
        sample = rng.integers(0, len(y), len(y))
        trees.append(_grow(X[sample], y[sample], enc.n_levels, params, mtry, rng))
    return RegressionForest(enc, trees)
