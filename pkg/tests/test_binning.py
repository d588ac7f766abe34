import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rtbcost.model.binning import (
    silverman_bandwidth,
    DegenerateDistribution,
    InsufficientSamples,
    NonPositivePrice,
    PriceBinning,
    fit_binning,
    log_normalize,
    loo_entropy,
)


def box_entropy(classes, h):
    """Direct O(m^2) leave-one-out box-kernel entropy, class by class."""
    total = 0.0
    for c in classes:
        m = len(c)
        if m < 2:
            return math.inf
        near = (np.abs(c[:, None] - c[None, :]) <= h).sum(axis=1) - 1
        dens = np.maximum(near, 0.5) / ((m - 1) * 2 * h)
        total -= float(np.sum(np.log(dens)))
    return total


def bandwidth(x):
    q75, q25 = np.percentile(x, [75, 25])
    return 0.9 * min(np.std(x), (q75 - q25) / 1.34) * len(x) ** -0.2


def test_log_normalize():
    assert log_normalize([1.0]) == [0.0]
    assert log_normalize([math.e]) == [1.0]
    with pytest.raises(NonPositivePrice):
        log_normalize([1.0, 0.0])
    with pytest.raises(NonPositivePrice):
        log_normalize([-2.0])


@given(st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=1, max_size=50))
def test_log_round_trip(prices):
    back = [math.exp(v) for v in log_normalize(prices)]
    assert all(abs(a - b) <= 1e-12 * max(1.0, b) for a, b in zip(back, prices))


def test_incremental_score_equals_direct():
    rng = np.random.default_rng(1)
    x = np.sort(rng.normal(size=300))
    h = bandwidth(x)
    assert silverman_bandwidth(x) == pytest.approx(h)
    for cuts in ([50, 150, 250], [10, 20, 290], [100, 200]):
        assert loo_entropy(x, cuts) == pytest.approx(box_entropy(np.split(x, cuts), h), abs=1e-9)


def test_uniform_log_prices_beat_grid_oracle():
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(0.0, math.log(100), 1000))
    b = fit_binning(x)
    shares = np.bincount(np.searchsorted(b.boundaries, x, side="right"), minlength=4) / len(x)
    assert np.all(np.abs(shares - 0.25) <= 0.05)
    # exhaustive search over a 50-sample grid of cut positions
    h = bandwidth(x)
    best_cuts, best = None, math.inf
    for cuts in itertools.combinations(range(50, 1000, 50), 3):
        s = box_entropy(np.split(x, cuts), h)
        if s < best:
            best_cuts, best = cuts, s
    assert all(abs(c - q) <= 50 for c, q in zip(best_cuts, (250, 500, 750)))
    fitted = [int(np.searchsorted(x, c)) for c in b.boundaries]
    assert box_entropy(np.split(x, fitted), h) <= best + 1e-6
    # equal-width boundaries for comparison
    width = np.array([1, 2, 3]) * math.log(100) / 4
    assert np.all(np.abs(np.array(b.boundaries) - width) < 0.25)


def test_identical_prices_degenerate():
    with pytest.raises(DegenerateDistribution):
        fit_binning([math.log(2.0)] * 100)


def test_few_distinct_values_fallback():
    x = [0.0] * 30 + [1.0] * 30
    with pytest.raises(DegenerateDistribution):
        fit_binning(x)
    b = fit_binning(x, allow_degenerate=True)
    assert b.k == 2 and b.boundaries == (0.5,)


def test_insufficient_samples():
    with pytest.raises(InsufficientSamples):
        fit_binning(list(range(39)))


def test_two_modes_split_between():
    rng = np.random.default_rng(4)
    lo = rng.normal(math.log(0.2), 0.15, 400)
    hi = rng.normal(math.log(5.0), 0.15, 600)
    x = np.sort(np.concatenate([lo, hi]))
    b = fit_binning(x, k=2)
    assert lo.max() < b.boundaries[0] < hi.min()
    # brute-force scan of every admissible single cut
    h = bandwidth(x)
    scores = [box_entropy([x[:p], x[p:]], h) for p in range(50, 951)]
    p_best = 50 + int(np.argmin(scores))
    assert x[p_best - 1] < b.boundaries[0] < x[p_best]


def test_lognormal_acceptance_shape():
    rng = np.random.default_rng(8)
    prices = rng.lognormal(0.0, 1.0, 10_000)
    b = fit_binning(log_normalize(prices))
    counts = np.bincount(b.classes_of(prices), minlength=4)
    assert np.all(counts >= 500)
    assert all(b.boundaries[i] < b.boundaries[i + 1] for i in range(2))
    reps = b.representatives
    for c in range(4):
        assert reps[c] == pytest.approx(float(np.median(prices[b.classes_of(prices) == c])), abs=1e-6)


@given(st.floats(min_value=1e-4, max_value=1e4), st.floats(min_value=1e-4, max_value=1e4))
def test_monotone(p1, p2):
    b = PriceBinning((-1.0, 0.0, 1.5), (0.2, 0.6, 1.5, 4.0))
    if p1 < p2:
        assert b.class_of(p1) <= b.class_of(p2)
    assert b.class_of(p1) == int(b.classes_of([p1])[0])


def test_binning_validation():
    with pytest.raises(ValueError):
        PriceBinning((1.0, 1.0), (1, 2, 3))
    with pytest.raises(ValueError):
        PriceBinning((1.0,), (2.0, 1.0))
    with pytest.raises(NonPositivePrice):
        PriceBinning((0.0,), (0.5, 2.0)).class_of(0)


def test_increasing_transform_preserves_classes():
    rng = np.random.default_rng(2)
    prices = rng.lognormal(0, 1, 500)
    b = PriceBinning((-0.5, 0.3, 1.0), (0.4, 1.0, 2.0, 4.0))
    # cube is strictly increasing: cubing prices and boundaries together keeps every class
    b3 = PriceBinning(tuple(3 * v for v in b.boundaries), tuple(r ** 3 for r in b.representatives))
    assert np.array_equal(b.classes_of(prices), b3.classes_of(prices ** 3))


def test_dict_round_trip():
    b = PriceBinning((-1.0, 0.0, 1.5), (0.2, 0.6, 1.5, 4.0))
    assert PriceBinning.from_dict(b.to_dict()) == b
