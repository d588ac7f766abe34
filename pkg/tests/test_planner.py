import math

import pytest
from hypothesis import given, strategies as st

from rtbcost.planner import (
    PAPER_144_DIMENSIONS,
    DEFAULT_DIMENSIONS,
    FilterDimension,
    MissingDimension,
    SampleSizeParams,
    budget,
    build_plan,
    dimensions_from_config,
    enumerate_setups,
    margin_of_error,
    required_n,
    z_value,
)


def nested_loops(dims):
    out = [[]]
    for d in dims:
        nxt = []
        for prefix in out:
            for v in d.values:
                nxt.append(prefix + [(d.name, v)])
        out = nxt
    return [tuple(a) for a in out]


def test_144_setups():
    setups = enumerate_setups(DEFAULT_DIMENSIONS, "paper_144")
    assert len(setups) == 144
    assert len({s.assignment for s in setups}) == 144
    assert all([k for k, _ in s.assignment] == list(PAPER_144_DIMENSIONS) for s in setups)


def test_small_full_cross():
    dims = [FilterDimension("a", ("x",)), FilterDimension("b", ("y", "z"))]
    assert [s.as_dict() for s in enumerate_setups(dims)] == [{"a": "x", "b": "y"}, {"a": "x", "b": "z"}]


def test_missing_dimension():
    with pytest.raises(MissingDimension):
        enumerate_setups(DEFAULT_DIMENSIONS[:3], "paper_144")


def test_bad_dimensions():
    with pytest.raises(ValueError):
        FilterDimension("a", ())
    with pytest.raises(ValueError):
        FilterDimension("a", ("x", "x"))
    with pytest.raises(ValueError):
        enumerate_setups([FilterDimension("a", ("x",)), FilterDimension("a", ("y",))])
    with pytest.raises(ValueError):
        enumerate_setups(DEFAULT_DIMENSIONS, "random")


_dims = st.lists(st.integers(1, 4), min_size=1, max_size=5).map(
    lambda sizes: [FilterDimension(f"d{i}", tuple(f"v{j}" for j in range(s))) for i, s in enumerate(sizes)])


@given(_dims)
def test_full_cross_equals_nested_loops(dims):
    got = [s.assignment for s in enumerate_setups(dims)]
    assert got == nested_loops(dims)
    assert len(got) == math.prod(len(d.values) for d in dims)


def test_z_value():
    assert z_value(0.05) == pytest.approx(1.959964, abs=1e-6)
    assert z_value(0.01) == pytest.approx(2.575829, abs=1e-6)
    with pytest.raises(ValueError):
        z_value(1.5)


def test_margin_of_error_example():
    d = margin_of_error(SampleSizeParams(std=2.15, n=144))
    assert d == pytest.approx(1.959964 * 2.15 / 12, abs=1e-6)
    assert abs(d - 0.3512) <= 0.005


def test_required_n_examples():
    # a std of 0.6939 lands on 185; 0.694 itself gives 186 because of the ceiling
    assert required_n(SampleSizeParams(std=0.6939, d=0.1)) == 185
    assert required_n(SampleSizeParams(std=0.694, d=0.1)) == 186


def test_sqrt_scaling():
    a = margin_of_error(SampleSizeParams(std=1.3, n=50))
    b = margin_of_error(SampleSizeParams(std=1.3, n=200))
    assert b == pytest.approx(a / 2)


@given(st.floats(0.05, 20), st.integers(1, 100_000))
def test_ceiling_round_trip(std, n):
    d = margin_of_error(SampleSizeParams(std=std, n=n))
    back = required_n(SampleSizeParams(std=std, d=d))
    assert back <= n <= back + 1


@given(st.floats(0.05, 20), st.integers(1, 10_000))
def test_monotone(std, n):
    d = margin_of_error(SampleSizeParams(std=std, n=n))
    assert margin_of_error(SampleSizeParams(std=std, n=n + 1)) < d
    assert margin_of_error(SampleSizeParams(std=std * 1.01, n=n)) > d


def test_params_validation():
    for kw in ({"std": 0}, {"std": 1, "alpha": 0}, {"std": 1, "n": 0}, {"std": 1, "d": -1}):
        with pytest.raises(ValueError):
            SampleSizeParams(**kw)


def test_budget():
    assert budget(144, 185, 5) == pytest.approx(133.20)
    assert budget(1, 1000, 1) == 1.0
    assert budget(10, 0, 5) == 0.0
    assert budget(enumerate_setups(DEFAULT_DIMENSIONS, "paper_144"), 185, 5) == pytest.approx(133.20)
    with pytest.raises(ValueError):
        budget(-1, 10, 1)


def test_build_plan():
    dims = dimensions_from_config({"city": ["Madrid", "Seville"], "os": ["ios", "android"]})
    plan = build_plan(dims, "full_cross", std=0.6939, d=0.1, max_bid_cpm=5.0)
    assert len(plan["setups"]) == 4
    assert plan["sample_size"]["impressions_per_setup"] == 185
    assert plan["sample_size"]["budget_usd"] == pytest.approx(4 * 185 * 5 / 1000)
