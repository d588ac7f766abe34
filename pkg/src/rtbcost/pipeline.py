"""End-to-end analysis: ingest, detect, featurize, estimate, aggregate."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .costs import (
    CohortSummary,
    Estimator,
    TimeShiftCoefficient,
    UserCostLedger,
    UserCostReport,
    Window,
    cohort_stats,
    report,
    time_shift,
    write_cohort_csvs,
)
from .features.vector import CoreFeatures, References, UserContext, build_features, project
from .ingest import HttpRequestRecord, partition_by_user
from .nurl import Cleartext, MacroRule, PriceNotification, detect


@dataclass
class UserStream:
    """Incremental per-user state: context for features plus the cost ledger."""

    ctx: UserContext
    ledger: UserCostLedger


@dataclass
class Analyzer:
    refs: References
    rules: Sequence[MacroRule]
    model: Estimator | None = None
    window: Window = field(default_factory=Window.unbounded)
    users: dict[str, UserStream] = field(default_factory=dict)
    accumulate: bool = True
    notifications: int = 0
    duplicates: int = 0

    def observe(self, rec: HttpRequestRecord) -> tuple[PriceNotification, CoreFeatures] | None:
        """Feed one record in arrival order; returns the notification it carried, if any."""
        st = self.users.get(rec.user_id)
        if st is None:
            st = self.users[rec.user_id] = UserStream(UserContext(self.refs),
                                                      UserCostLedger(rec.user_id, self.window))
        cat = self.refs.blacklist.classify(rec.host)
        n = detect(rec, self.rules)
        st.ctx.observe(rec, cat, n)
        if n is None:
            return None
        core = project(build_features(n, st.ctx, rec))
        if self.accumulate and rec.timestamp in self.window:
            self.notifications += 1
            if not st.ledger.accumulate(n, self.model, core):
                self.duplicates += 1
        return n, core

    def ledgers(self) -> list[UserCostLedger]:
        return [self.users[u].ledger for u in sorted(self.users)]

    def reports(self) -> list[UserCostReport]:
        return [report(led) for led in self.ledgers()]


def analyze_records(records: Iterable[HttpRequestRecord], refs: References, rules: Sequence[MacroRule],
                    model: Estimator | None = None, window: Window | None = None) -> Analyzer:
    """Batch analysis; each user's records are replayed in timestamp order."""
    an = Analyzer(refs, rules, model, window or Window.unbounded())
    for _, recs in sorted(partition_by_user(records).items()):
        for rec in recs:
            an.observe(rec)
    return an


def labelled_notifications(records: Iterable[HttpRequestRecord], refs: References,
                           rules: Sequence[MacroRule]) -> Iterator[tuple[PriceNotification, CoreFeatures]]:
    """Every detected notification with its core features (timestamp order per user)."""
    an = Analyzer(refs, rules, accumulate=False)
    for _, recs in sorted(partition_by_user(records).items()):
        for rec in recs:
            hit = an.observe(rec)
            if hit is not None:
                yield hit


def shift_ledgers(ledgers: Sequence[UserCostLedger], coeff: TimeShiftCoefficient | None,
                  include_encrypted: bool = False) -> list[UserCostLedger]:
    if coeff is None:
        return list(ledgers)
    return [time_shift(led, coeff, include_encrypted) for led in ledgers]


def write_reports(ledgers: Sequence[UserCostLedger], out_dir: str | Path) -> tuple[list[UserCostReport], CohortSummary]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reps = [report(led) for led in ledgers]
    with (out / "user_reports.jsonl").open("w", encoding="utf-8") as fh:
        for r in reps:
            fh.write(json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    summary = cohort_stats(reps, ledgers)
    write_cohort_csvs(summary, out)
    return reps, summary


def contribution_rows(lines: Iterable[str]) -> list[tuple[CoreFeatures, Decimal]]:
    """Cleartext ``(features, cpm)`` pairs from a contribution JSONL stream.

    Encrypted contributions carry no usable label and are skipped.
    """
    rows = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        d = json.loads(line)
        price = d["price"]
        if price.get("type") != "cleartext":
            continue
        rows.append((CoreFeatures.from_dict(d["features"]), Decimal(str(price["cpm"]))))
    return rows


def rows_from_notifications(pairs: Iterable[tuple[PriceNotification, CoreFeatures]]) -> list[tuple[CoreFeatures, Decimal]]:
    return [(core, n.price.cpm) for n, core in pairs if isinstance(n.price, Cleartext)]


def contribution_line(core: CoreFeatures, price: Any) -> dict[str, Any]:
    if isinstance(price, Cleartext):
        p: Mapping[str, Any] = {"type": "cleartext", "cpm": str(price.cpm), "currency": price.currency}
    else:
        p = {"type": "encrypted", "token": price.token}
    return {"features": core.to_dict(), "price": dict(p)}
