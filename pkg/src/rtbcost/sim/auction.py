"""Second-price auction."""

from __future__ import annotations

from typing import Sequence


class TooFewBids(ValueError):
    pass


def run_auction(bids: Sequence[tuple[str, float]]) -> tuple[str, float]:
    """Highest bid wins (earliest on ties) and pays the best losing bid."""
    if len(bids) < 2:
        raise TooFewBids("a second-price auction needs at least two bids")
    best = 0
    for i, (_, b) in enumerate(bids):
        if not b > 0:
            raise ValueError(f"bids must be positive, got {b!r}")
        if b > bids[best][1]:
            best = i
    charge = max(b for i, (_, b) in enumerate(bids) if i != best)
    return bids[best][0], charge
