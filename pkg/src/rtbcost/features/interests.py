"""Publisher -> IAB mapping and user interest profiles."""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

_IAB_RE = re.compile(r"^IAB([1-9]|1[0-9]|2[0-6])$")


class EmptyProfile(ValueError):
    """No visited domain maps to an IAB category."""


class IabMap:
    """Domain-suffix -> IAB code map."""

    def __init__(self, entries: Mapping[str, str] | None = None):
        self._entries: dict[str, str] = {}
        for dom, code in (entries or {}).items():
            if not _IAB_RE.match(code):
                raise ValueError(f"bad IAB code {code!r} for {dom!r}")
            self._entries[dom.lower().strip(".")] = code

    @classmethod
    def from_csv(cls, path: str | Path) -> IabMap:
        entries = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0].strip().lower() == "domain":
                    continue
                entries[row[0].strip()] = row[1].strip()
        return cls(entries)

    def lookup(self, host: str | None) -> str | None:
        if not host:
            return None
        h = host.lower().rstrip(".")
        while True:
            code = self._entries.get(h)
            if code is not None:
                return code
            dot = h.find(".")
            if dot < 0:
                return None
            h = h[dot + 1:]

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class InterestProfile:
    weights: dict[str, float] = field(default_factory=dict)

    def top(self) -> str | None:
        if not self.weights:
            return None
        return min(self.weights, key=lambda k: (-self.weights[k], k))


def interests_from_counts(counts: Mapping[str, int]) -> InterestProfile:
    total = sum(counts.values())
    if total == 0:
        raise EmptyProfile("no mapped visits")
    return InterestProfile({k: v / total for k, v in sorted(counts.items()) if v})


def infer_interests(visited_hosts: Iterable[str], iab: IabMap) -> InterestProfile:
    """Weight of each IAB = visits to its domains / all mapped visits."""
    counts: Counter[str] = Counter()
    for host in visited_hosts:
        code = iab.lookup(host)
        if code is not None:
            counts[code] += 1
    return interests_from_counts(counts)
