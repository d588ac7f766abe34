"""Cookie-synchronisation detection: identifier-like values shared across domains."""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Iterable
from urllib.parse import parse_qsl, urlsplit

from ..nurl import registrable_domain

MIN_ID_LENGTH = 16
MIN_ENTROPY_BITS = 3.0
_ID_RE = re.compile(r"^[A-Za-z0-9_\-]+$")


def shannon_entropy(s: str) -> float:
    n = len(s)
    return -sum(c / n * math.log2(c / n) for c in Counter(s).values())


def looks_like_id(value: str) -> bool:
    if len(value) < MIN_ID_LENGTH or not _ID_RE.match(value):
        return False
    if not any(ch.isdigit() for ch in value) or not any(ch.isalpha() for ch in value):
        return False
    return shannon_entropy(value) >= MIN_ENTROPY_BITS


def id_values(url: str) -> list[str]:
    query = urlsplit(url).query
    if not query:
        return []
    return [v for _, v in parse_qsl(query, keep_blank_values=False) if looks_like_id(v)]


class CookieSyncTracker:
    """Counts identifiers the first time they are seen on a second domain."""

    def __init__(self):
        self._domains: dict[str, set[str]] = {}
        self.count = 0

    def observe(self, host: str, url: str) -> None:
        values = id_values(url)
        if not values:
            return
        dom = registrable_domain(host)
        for v in values:
            seen = self._domains.setdefault(v, set())
            if dom not in seen:
                seen.add(dom)
                if len(seen) == 2:
                    self.count += 1


def detect_cookie_sync(user_stream: Iterable) -> int:
    """Number of identifiers observed on >= 2 distinct registrable domains."""
    tracker = CookieSyncTracker()
    for rec in user_stream:
        tracker.observe(rec.host, rec.url)
    return tracker.count
