"""Probing-campaign setup enumeration and sample-size / budget arithmetic."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Mapping, Sequence


class MissingDimension(ValueError):
    pass


@dataclass(frozen=True)
class FilterDimension:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError(f"dimension {self.name!r} has no values")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"dimension {self.name!r} has duplicate values")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class CampaignSetup:
    assignment: tuple[tuple[str, str], ...]

    def as_dict(self) -> dict[str, str]:
        return dict(self.assignment)


DEFAULT_DIMENSIONS: tuple[FilterDimension, ...] = (
    FilterDimension("city", ("Madrid", "Barcelona", "Valencia", "Seville")),
    FilterDimension("interaction", ("app", "mobile_web")),
    FilterDimension("device", ("smartphone", "tablet")),
    FilterDimension("os", ("android", "ios")),
    FilterDimension("tod", ("12am-9am", "9am-6pm", "6pm-12am")),
    FilterDimension("dow", ("weekday", "weekend")),
    # smartphone formats; tablets map to 728x90, 300x250, 768x1024 at launch time
    FilterDimension("ad_format", ("320x50", "300x250", "320x480")),
    FilterDimension("adx", ("MoPub", "OpenX", "Rubicon", "DoubleClick", "PulsePoint")),
)

PAPER_144_DIMENSIONS = ("city", "interaction", "tod", "dow", "ad_format")


def _check(dims: Sequence[FilterDimension]) -> None:
    names = [d.name for d in dims]
    if len(set(names)) != len(names):
        raise ValueError("dimension names must be unique")


def enumerate_setups(dims: Sequence[FilterDimension], strategy: str = "full_cross") -> list[CampaignSetup]:
    """Cartesian product of dimension values, in the order dimensions are given."""
    _check(dims)
    if strategy == "paper_144":
        by_name = {d.name: d for d in dims}
        missing = [n for n in PAPER_144_DIMENSIONS if n not in by_name]
        if missing:
            raise MissingDimension(f"paper_144 needs dimensions {missing}")
        dims = [by_name[n] for n in PAPER_144_DIMENSIONS]
    elif strategy != "full_cross":
        raise ValueError(f"unknown strategy {strategy!r}")
    names = [d.name for d in dims]
    return [CampaignSetup(tuple(zip(names, combo))) for combo in itertools.product(*(d.values for d in dims))]


def z_value(alpha: float = 0.05) -> float:
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    return NormalDist().inv_cdf(1 - alpha / 2)


@dataclass(frozen=True)
class SampleSizeParams:
    std: float
    alpha: float = 0.05
    n: int | None = None
    d: float | None = None
    m: float | None = None

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.n is not None and self.n < 1:
            raise ValueError("n must be >= 1")
        if self.d is not None and not self.d > 0:
            raise ValueError("d must be positive")

    @property
    def z(self) -> float:
        return z_value(self.alpha)


def margin_of_error(p: SampleSizeParams) -> float:
    if p.n is None:
        raise ValueError("n is required")
    return p.z * p.std / math.sqrt(p.n)


def required_n(p: SampleSizeParams) -> int:
    if p.d is None:
        raise ValueError("d is required")
    raw = (p.z * p.std / p.d) ** 2
    # guard against float noise pushing an exact integer over the ceiling
    return max(1, math.ceil(raw - 1e-9))


def budget(setups: int | Sequence[CampaignSetup], impressions_per_setup: float, max_bid_cpm: float) -> float:
    n = setups if isinstance(setups, int) else len(setups)
    if n < 0 or impressions_per_setup < 0 or max_bid_cpm < 0:
        raise ValueError("inputs must be non-negative")
    return n * impressions_per_setup * max_bid_cpm / 1000.0


def dimensions_from_config(cfg: Mapping[str, Iterable[str]]) -> list[FilterDimension]:
    return [FilterDimension(name, tuple(vals)) for name, vals in cfg.items()]


def build_plan(dims: Sequence[FilterDimension], strategy: str, std: float, alpha: float = 0.05,
               d: float | None = None, impressions: int | None = None, max_bid_cpm: float = 5.0) -> dict:
    setups = enumerate_setups(dims, strategy)
    n_setups = len(setups)
    if impressions is None:
        impressions = required_n(SampleSizeParams(std, alpha, d=d if d is not None else 0.1))
    return {
        "strategy": strategy,
        "dimensions": {dim.name: list(dim.values) for dim in dims},
        "setups": [s.as_dict() for s in setups],
        "sample_size": {
            "std": std,
            "alpha": alpha,
            "z": z_value(alpha),
            "setups": n_setups,
            "margin_of_error_across_setups": margin_of_error(SampleSizeParams(std, alpha, n=n_setups)),
            "impressions_per_setup": impressions,
            "max_bid_cpm": max_bid_cpm,
            "budget_usd": budget(n_setups, impressions, max_bid_cpm),
        },
    }
