"""Per-user cost ledgers, reports, cohort statistics and ARPU extrapolation.

Money is held as integer micro-CPM so sums are exact and independent of
accumulation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from statistics import median
from typing import Any, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .nurl import Cleartext, PriceNotification

MICROS = 10**6
PERCENTILES = (5, 10, 25, 50, 75, 90, 95)
_Q = Decimal("0.000001")


class ModelRequired(RuntimeError):
    pass


class OutOfWindow(ValueError):
    pass


class Estimator(Protocol):
    def estimate(self, notification: PriceNotification, core: Any) -> float: ...


def to_micros(cpm: Decimal | float | int | str) -> int:
    d = cpm if isinstance(cpm, Decimal) else Decimal(str(cpm))
    return int(d.quantize(_Q, rounding=ROUND_HALF_EVEN) * MICROS)


def from_micros(m: int) -> Decimal:
    return (Decimal(m) / MICROS).quantize(_Q)


@dataclass(frozen=True)
class Window:
    start: int
    end: int  # inclusive, epoch ms

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("window end precedes start")

    def __contains__(self, ts: int) -> bool:
        return self.start <= ts <= self.end

    @classmethod
    def unbounded(cls) -> Window:
        return cls(-(2**62), 2**62)

    @property
    def is_unbounded(self) -> bool:
        return self.start == -(2**62) and self.end == 2**62

    def to_list(self) -> list[int] | None:
        return None if self.is_unbounded else [self.start, self.end]

    @classmethod
    def from_list(cls, v: Sequence[int] | None) -> Window:
        return cls.unbounded() if v is None else cls(int(v[0]), int(v[1]))


@dataclass(frozen=True)
class Entry:
    key: tuple[str, int, str]
    timestamp: int
    adx_id: str
    micros: int
    publisher_iab: str | None = None
    features: Any = None


@dataclass
class UserCostLedger:
    """SC_u and SE_u for one user over a window, keyed by notification identity."""

    user_id: str
    window: Window = field(default_factory=Window.unbounded)
    cleartext: dict[tuple, Entry] = field(default_factory=dict)
    encrypted: dict[tuple, Entry] = field(default_factory=dict)

    def accumulate(self, n: PriceNotification, model: Estimator | None = None, core: Any = None) -> bool:
        """Add ``n``; returns False when it was already recorded."""
        if n.user_id != self.user_id:
            raise ValueError(f"notification for {n.user_id!r} in ledger of {self.user_id!r}")
        if n.timestamp not in self.window:
            raise OutOfWindow(f"notification at {n.timestamp} outside window")
        key = n.key
        if key in self.cleartext or key in self.encrypted:
            return False
        iab = getattr(core, "publisher_iab", None)
        if isinstance(n.price, Cleartext):
            self.cleartext[key] = Entry(key, n.timestamp, n.adx_id, to_micros(n.price.cpm), iab, core)
        else:
            if model is None:
                raise ModelRequired("encrypted price notification needs a price model")
            est = model.estimate(n, core)
            self.encrypted[key] = Entry(key, n.timestamp, n.adx_id, to_micros(est), iab, core)
        return True

    @property
    def c_micros(self) -> int:
        return sum(e.micros for e in self.cleartext.values())

    @property
    def e_micros(self) -> int:
        return sum(e.micros for e in self.encrypted.values())


def accumulate(ledger: UserCostLedger, n: PriceNotification, model: Estimator | None = None,
               core: Any = None) -> UserCostLedger:
    ledger.accumulate(n, model, core)
    return ledger


@dataclass(frozen=True)
class UserCostReport:
    user_id: str
    window: Window
    c_micros: int
    e_micros: int
    n_cleartext: int
    n_encrypted: int

    @property
    def v_micros(self) -> int:
        return self.c_micros + self.e_micros

    @property
    def C_u(self) -> Decimal:
        return from_micros(self.c_micros)

    @property
    def E_u(self) -> Decimal:
        return from_micros(self.e_micros)

    @property
    def V_u(self) -> Decimal:
        return from_micros(self.v_micros)

    @property
    def usd_equivalent(self) -> Decimal:
        return from_micros(self.v_micros) / 1000

    def avg_cpm(self, kind: str) -> float | None:
        m, n = (self.c_micros, self.n_cleartext) if kind == "cleartext" else (self.e_micros, self.n_encrypted)
        return m / n / MICROS if n else None

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "window": self.window.to_list(),
            "C_u": str(self.C_u),
            "E_u": str(self.E_u),
            "V_u": str(self.V_u),
            "c_micros": self.c_micros,
            "e_micros": self.e_micros,
            "v_micros": self.v_micros,
            "usd_equivalent": str(self.usd_equivalent),
            "impressions": {"cleartext": self.n_cleartext, "encrypted": self.n_encrypted},
            "avg_cpm": {"cleartext": self.avg_cpm("cleartext"), "encrypted": self.avg_cpm("encrypted")},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> UserCostReport:
        return cls(d["user_id"], Window.from_list(d["window"]), int(d["c_micros"]), int(d["e_micros"]),
                   int(d["impressions"]["cleartext"]), int(d["impressions"]["encrypted"]))


def report(ledger: UserCostLedger) -> UserCostReport:
    return UserCostReport(ledger.user_id, ledger.window, ledger.c_micros, ledger.e_micros,
                          len(ledger.cleartext), len(ledger.encrypted))


@dataclass(frozen=True)
class TimeShiftCoefficient:
    ratio: float
    basis: tuple[str, str] = ("historical", "reference")
    method: str = "median-ratio"

    def __post_init__(self):
        if not self.ratio > 0 or not math.isfinite(self.ratio):
            raise ValueError("time-shift ratio must be positive")


def compute_time_shift(historical: Sequence[float], reference: Sequence[float],
                       basis: tuple[str, str] = ("historical", "reference")) -> TimeShiftCoefficient:
    if not historical or not reference:
        raise ValueError("both price samples must be non-empty")
    return TimeShiftCoefficient(float(median(reference)) / float(median(historical)), basis)


def time_shift(values: UserCostLedger | Sequence[float], coeff: TimeShiftCoefficient,
               include_encrypted: bool = False):
    """Scale historical cleartext prices by ``coeff.ratio``.

    A sequence is scaled elementwise; a ledger is copied with its cleartext
    entries (and encrypted ones if asked) rescaled.
    """
    r = coeff.ratio
    if not isinstance(values, UserCostLedger):
        return [v * r for v in values]
    ratio = Decimal(repr(r))

    def scale(entries: dict) -> dict:
        return {k: replace(e, micros=int((Decimal(e.micros) * ratio).quantize(Decimal(1), ROUND_HALF_EVEN)))
                for k, e in entries.items()}

    return UserCostLedger(values.user_id, values.window, scale(values.cleartext),
                          scale(values.encrypted) if include_encrypted else dict(values.encrypted))


def percentiles(values: Sequence[float], ps: Sequence[float] = PERCENTILES) -> dict[str, float]:
    """Linear-interpolation percentiles."""
    if len(values) == 0:
        return {}
    arr = np.asarray(values, dtype=float)
    return {f"p{p:g}": float(np.percentile(arr, p)) for p in ps}


def cdf_points(values: Sequence[float], n_points: int = 101) -> list[tuple[float, float]]:
    if len(values) == 0:
        return []
    arr = np.sort(np.asarray(values, dtype=float))
    qs = np.linspace(0, 1, n_points)
    xs = np.quantile(arr, qs)
    return [(float(x), float(np.searchsorted(arr, x, side="right") / len(arr))) for x in xs]


@dataclass
class CohortSummary:
    users: int
    percentiles: dict[str, dict[str, float]]
    cdf: dict[str, list[tuple[float, float]]]
    iab_prices: dict[str, dict[str, float]]
    scatter: list[dict]

    def to_dict(self) -> dict:
        return {"users": self.users, "percentiles": self.percentiles, "cdf": self.cdf,
                "iab_prices": self.iab_prices, "scatter": self.scatter}


def cohort_stats(reports: Iterable[UserCostReport], ledgers: Iterable[UserCostLedger] = ()) -> CohortSummary:
    reps = sorted(reports, key=lambda r: r.user_id)
    series = {
        "V_u": [r.v_micros / MICROS for r in reps],
        "C_u": [r.c_micros / MICROS for r in reps],
        "E_u": [r.e_micros / MICROS for r in reps],
    }
    by_iab: dict[str, list[float]] = {}
    for led in ledgers:
        for e in (*led.cleartext.values(), *led.encrypted.values()):
            by_iab.setdefault(e.publisher_iab or "other", []).append(e.micros / MICROS)
    iab_table = {}
    for iab in sorted(by_iab):
        prices = by_iab[iab]
        iab_table[iab] = {"count": len(prices), "mean": float(np.mean(prices)), **percentiles(prices)}
    return CohortSummary(
        users=len(reps),
        percentiles={k: percentiles(v) for k, v in series.items()} if reps else {},
        cdf={k: cdf_points(v) for k, v in series.items()} if reps else {},
        iab_prices=iab_table,
        scatter=[{"user_id": r.user_id, "C_u": r.c_micros / MICROS, "E_u": r.e_micros / MICROS,
                  "n_cleartext": r.n_cleartext, "n_encrypted": r.n_encrypted} for r in reps],
    )


def write_cohort_csvs(summary: CohortSummary, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "cohort.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "users", *(f"p{p}" for p in PERCENTILES)])
        for metric in ("V_u", "C_u", "E_u"):
            pct = summary.percentiles.get(metric, {})
            w.writerow([metric, summary.users, *(f"{pct[f'p{p}']:.6f}" if pct else "" for p in PERCENTILES)])
    written.append(path)

    path = out / "cohort_cdf.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value", "cdf"])
        for metric, pts in summary.cdf.items():
            for x, y in pts:
                w.writerow([metric, f"{x:.6f}", f"{y:.6f}"])
    written.append(path)

    path = out / "iab_prices.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iab", "count", "mean", *(f"p{p}" for p in PERCENTILES)])
        for iab, row in summary.iab_prices.items():
            w.writerow([iab, row["count"], f"{row['mean']:.6f}", *(f"{row[f'p{p}']:.6f}" for p in PERCENTILES)])
    written.append(path)

    path = out / "user_scatter.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "C_u", "E_u", "n_cleartext", "n_encrypted"])
        for s in summary.scatter:
            w.writerow([s["user_id"], f"{s['C_u']:.6f}", f"{s['E_u']:.6f}", s["n_cleartext"], s["n_encrypted"]])
    written.append(path)
    return written


@dataclass(frozen=True)
class ArpuFactors:
    online_share: float = 0.83
    mobile_share: float = 0.51
    http_share: float = 0.40
    rtb_net_share: float = 0.45
    rtb_of_total_ads: float = 0.20

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not 0 < v <= 1:
                raise ValueError(f"{k} must be in (0, 1], got {v}")

    @property
    def product(self) -> float:
        return (self.online_share * self.mobile_share * self.http_share
                * self.rtb_net_share * self.rtb_of_total_ads)


def extrapolate_arpu(annual_cpm_sum: float, f: ArpuFactors | None = None) -> float:
    """Yearly per-user ad revenue implied by an observed RTB cost total."""
    if annual_cpm_sum < 0:
        raise ValueError("cpm sum must be non-negative")
    f = f or ArpuFactors()
    return (annual_cpm_sum / 1000.0) / f.product
