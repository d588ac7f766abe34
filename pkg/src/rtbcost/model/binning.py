"""Log-price discretisation into balanced price classes."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class NonPositivePrice(ValueError):
    pass


class DegenerateDistribution(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


MIN_CLASS_SHARE = 0.05


def log_normalize(prices: Sequence[float]) -> list[float]:
    out = []
    for p in prices:
        if not p > 0:
            raise NonPositivePrice(f"price must be positive, got {p!r}")
        out.append(math.log(p))
    return out


@dataclass(frozen=True)
class PriceBinning:
    """Class cut points in log-CPM plus one representative CPM per class."""

    boundaries: tuple[float, ...]
    representatives: tuple[float, ...]

    def __post_init__(self):
        b = self.boundaries
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError("boundaries must be strictly increasing")
        if len(self.representatives) != len(b) + 1:
            raise ValueError("need one representative per class")
        r = self.representatives
        if any(x <= 0 for x in r) or any(r[i] >= r[i + 1] for i in range(len(r) - 1)):
            raise ValueError("representatives must be positive and strictly increasing")

    @property
    def k(self) -> int:
        return len(self.boundaries) + 1

    def class_of(self, cpm: float) -> int:
        if not cpm > 0:
            raise NonPositivePrice(f"price must be positive, got {cpm!r}")
        return bisect_right(self.boundaries, math.log(cpm))

    def classes_of(self, cpms) -> np.ndarray:
        arr = np.asarray(cpms, dtype=float)
        if np.any(~(arr > 0)):
            raise NonPositivePrice("prices must be positive")
        return np.searchsorted(np.asarray(self.boundaries), np.log(arr), side="right")

    def to_dict(self) -> dict:
        return {"boundaries": list(self.boundaries), "representatives": list(self.representatives)}

    @classmethod
    def from_dict(cls, d: dict) -> PriceBinning:
        return cls(tuple(float(x) for x in d["boundaries"]), tuple(float(x) for x in d["representatives"]))


def silverman_bandwidth(x: np.ndarray) -> float:
    n = len(x)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(float(np.std(x)), float(q75 - q25) / 1.34) or float(np.std(x))
    return max(0.9 * spread * n ** -0.2, 1e-3)


def loo_entropy(sorted_x: np.ndarray, cut_idx: Sequence[int], h: float | None = None) -> float:
    """Summed within-class leave-one-out entropy under a box kernel of half-width ``h``.

    Each point's density is estimated from the *other* members of its own
    class: ``count / ((m - 1) * 2h)``, where ``count`` is the number of
    classmates within ``h``. The sum of ``-log density`` over all points is
    returned; lower is better. Classes are ``sorted_x[cut_idx[j-1]:cut_idx[j]]``.
    """
    return _EntropyScorer(np.asarray(sorted_x, dtype=float), h).score(cut_idx)


class _EntropyScorer:
    """Vectorised :func:`loo_entropy` with neighbour windows precomputed once."""

    def __init__(self, sorted_x: np.ndarray, h: float | None = None):
        self.n = len(sorted_x)
        self.h = silverman_bandwidth(sorted_x) if h is None else h
        self.lo = np.searchsorted(sorted_x, sorted_x - self.h, side="left")
        self.hi = np.searchsorted(sorted_x, sorted_x + self.h, side="right")

    def score(self, cut_idx: Sequence[int]) -> float:
        bounds = np.array([0, *cut_idx, self.n])
        m = np.diff(bounds)
        if np.any(m < 2):
            return math.inf
        cls = np.repeat(np.arange(len(m)), m)
        # neighbours across a cut belong to another class and do not count
        count = np.minimum(self.hi, bounds[1:][cls]) - np.maximum(self.lo, bounds[:-1][cls]) - 1
        # an isolated point gets half a neighbour rather than zero density
        return float(np.sum(m * np.log((m - 1) * 2 * self.h)) - np.sum(np.log(np.maximum(count, 0.5))))


def _representatives(log_prices: np.ndarray, cuts: Sequence[float]) -> tuple[float, ...]:
    cls = np.searchsorted(np.asarray(cuts, dtype=float), log_prices, side="right")
    cpm = np.exp(log_prices)
    # micro-CPM resolution, so exp(log(p)) round-off does not leak into estimates
    return tuple(max(round(float(np.median(cpm[cls == c])), 6), 1e-6) for c in range(len(cuts) + 1))


def fit_binning(log_prices: Sequence[float], k: int = 4, min_share: float = MIN_CLASS_SHARE,
                allow_degenerate: bool = False, max_rounds: int = 50) -> PriceBinning:
    """Choose ``k - 1`` log-space cut points minimising within-class LOO entropy.

    The ``m log m`` part of the objective favours balanced classes, the lost
    cross-cut neighbours favour cuts through sparse regions.

    Cuts sit at midpoints between adjacent distinct values. The search starts
    from the equal-width and equal-frequency grids and hill-climbs each cut
    with shrinking steps; candidates leaving a class under ``min_share`` of
    the samples are rejected.
    """
    x = np.sort(np.asarray(log_prices, dtype=float))
    n = len(x)
    if n < 10 * k:
        raise InsufficientSamples(f"need at least {10 * k} samples for k={k}, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("log prices must be finite")
    distinct = np.unique(x)
    if len(distinct) < k:
        if not allow_degenerate:
            raise DegenerateDistribution(f"{len(distinct)} distinct values for k={k}")
        cuts = list(0.5 * (distinct[1:] + distinct[:-1]))
        return PriceBinning(tuple(cuts), _representatives(x, cuts))

    # valid split positions p: x[p-1] < x[p]
    valid = np.flatnonzero(np.diff(x) > 0) + 1
    min_count = max(2, math.ceil(min_share * n))
    scorer = _EntropyScorer(x)

    def snap(p: float) -> int:
        i = int(np.searchsorted(valid, p))
        if i == 0:
            return int(valid[0])
        if i >= len(valid):
            return int(valid[-1])
        return int(valid[i] if valid[i] - p < p - valid[i - 1] else valid[i - 1])

    def score(c: list[int]) -> float:
        bounds = [0, *c, n]
        if any(bounds[i + 1] - bounds[i] < min_count for i in range(len(bounds) - 1)):
            return math.inf
        return scorer.score(c)

    lo, hi = x[0], x[-1]
    starts = [
        [snap(np.searchsorted(x, lo + j * (hi - lo) / k)) for j in range(1, k)],
        [snap(j * n / k) for j in range(1, k)],
    ]
    steps = sorted({max(1, n // d) for d in (8, 20, 50, 100, 200, 500, 1000, 5000)} | {1}, reverse=True)

    best_cuts, best = None, math.inf
    for cuts in starts:
        cur = score(cuts)
        for _ in range(max_rounds):
            improved = False
            for i in range(k - 1):
                for step in steps:
                    for sign in (1, -1):
                        trial = list(cuts)
                        trial[i] = snap(cuts[i] + sign * step)
                        if trial[i] == cuts[i]:
                            continue
                        s = score(trial)
                        if s < cur:
                            cuts, cur, improved = trial, s, True
            if not improved:
                break
        if cur < best:
            best_cuts, best = cuts, cur

    if best_cuts is None:
        best_cuts = starts[1]
        if len(set(best_cuts)) != len(best_cuts):
            raise DegenerateDistribution("cannot form non-empty classes")
    cut_values = [float(0.5 * (x[p - 1] + x[p])) for p in best_cuts]
    return PriceBinning(tuple(cut_values), _representatives(x, cut_values))
