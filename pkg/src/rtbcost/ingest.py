"""Weblog ingestion: record parsing, domain categorisation, per-user partitioning."""

from __future__ import annotations

import csv
import enum
import gzip
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import IO, Iterable, Iterator
from urllib.parse import urlsplit

log = logging.getLogger(__name__)


class MalformedRecord(ValueError):
    """A log line lacks a required field or cannot be decoded."""


class BlacklistError(ValueError):
    """Reference blacklist is inconsistent (unknown category, duplicate suffix)."""


class DomainCategory(str, enum.Enum):
    ADVERTISING = "Advertising"
    ANALYTICS = "Analytics"
    SOCIAL = "Social"
    THIRD_PARTY_CONTENT = "ThirdPartyContent"
    REST = "Rest"


# Disconnect-style list names accepted as aliases.
_CATEGORY_ALIASES = {
    "advertising": DomainCategory.ADVERTISING,
    "analytics": DomainCategory.ANALYTICS,
    "social": DomainCategory.SOCIAL,
    "thirdpartycontent": DomainCategory.THIRD_PARTY_CONTENT,
    "content": DomainCategory.THIRD_PARTY_CONTENT,
    "rest": DomainCategory.REST,
}


def parse_category(name: str) -> DomainCategory:
    cat = _CATEGORY_ALIASES.get(name.strip().lower().replace(" ", "").replace("_", ""))
    if cat is None:
        raise BlacklistError(f"unknown category {name!r}")
    return cat


@dataclass(frozen=True, slots=True)
class HttpRequestRecord:
    timestamp: int  # epoch milliseconds, UTC
    user_id: str
    url: str
    host: str
    user_agent: str = ""
    referer: str | None = None
    bytes_out: int = 0
    bytes_in: int = 0
    duration_ms: int = 0
    client_ip: str | None = None
    city: str | None = None


@dataclass
class IngestStats:
    lines: int = 0
    parsed: int = 0
    malformed: int = 0
    out_of_window: int = 0
    dropped_fields: int = 0

    @property
    def skipped(self) -> int:
        return self.malformed + self.out_of_window

    def merge(self, other: IngestStats) -> IngestStats:
        return IngestStats(
            self.lines + other.lines,
            self.parsed + other.parsed,
            self.malformed + other.malformed,
            self.out_of_window + other.out_of_window,
            self.dropped_fields + other.dropped_fields,
        )


def parse_timestamp(value: object) -> int:
    """Normalise an epoch-ms integer or RFC 3339 string to epoch milliseconds."""
    if isinstance(value, bool):
        raise MalformedRecord(f"bad timestamp {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return int(value)
    if isinstance(value, str):
        s = value.strip()
        if s.lstrip("-").isdigit():
            return int(s)
        if s.endswith(("Z", "z")):
            s = s[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(s)
        except ValueError as exc:
            raise MalformedRecord(f"bad timestamp {value!r}") from exc
        if dt.tzinfo is None:
            raise MalformedRecord(f"timestamp without offset {value!r}")
        return int(dt.timestamp() * 1000)
    raise MalformedRecord(f"bad timestamp {value!r}")


def _host_of(url: str) -> str:
    parts = urlsplit(url)
    host = parts.hostname
    if not parts.scheme or not host:
        raise MalformedRecord(f"not an absolute URL: {url[:80]!r}")
    return host


def _opt_int(raw: dict, key: str, stats: IngestStats | None) -> int:
    v = raw.get(key)
    if v is None or v == "":
        return 0
    try:
        n = int(v)
    except (TypeError, ValueError):
        n = -1
    if n < 0:
        if stats is not None:
            stats.dropped_fields += 1
        return 0
    return n


def _opt_str(raw: dict, key: str) -> str | None:
    v = raw.get(key)
    if v is None or v == "":
        return None
    return str(v)


def record_from_mapping(raw: dict, stats: IngestStats | None = None) -> HttpRequestRecord:
    try:
        ts, uid, url = raw["ts"], raw["uid"], raw["url"]
    except KeyError as exc:
        raise MalformedRecord(f"missing field {exc.args[0]!r}") from None
    if uid in (None, "") or not url:
        raise MalformedRecord("empty uid/url")
    return HttpRequestRecord(
        timestamp=parse_timestamp(ts),
        user_id=str(uid),
        url=url,
        host=_host_of(url),
        user_agent=raw.get("ua") or "",
        referer=_opt_str(raw, "referer"),
        bytes_out=_opt_int(raw, "bytes_out", stats),
        bytes_in=_opt_int(raw, "bytes_in", stats),
        duration_ms=_opt_int(raw, "dur", stats),
        client_ip=_opt_str(raw, "ip"),
        city=_opt_str(raw, "city"),
    )


CSV_COLUMNS = ("ts", "uid", "url", "ua", "referer", "bytes_out", "bytes_in", "dur", "ip", "city")


def record_to_mapping(r: HttpRequestRecord) -> dict:
    """Inverse of :func:`record_from_mapping` (JSON Lines schema)."""
    out: dict = {"ts": r.timestamp, "uid": r.user_id, "url": r.url, "ua": r.user_agent}
    if r.referer is not None:
        out["referer"] = r.referer
    out["bytes_out"] = r.bytes_out
    out["bytes_in"] = r.bytes_in
    out["dur"] = r.duration_ms
    if r.client_ip is not None:
        out["ip"] = r.client_ip
    if r.city is not None:
        out["city"] = r.city
    return out


def parse_record(line: str, format: str = "json_lines", header: list[str] | None = None,
                 stats: IngestStats | None = None) -> HttpRequestRecord:
    """Parse one log line. CSV lines need the header columns of their file."""
    if format == "json_lines":
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"invalid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise MalformedRecord("JSON record is not an object")
    elif format == "csv":
        cols = header or list(CSV_COLUMNS)
        row = next(csv.reader([line]), [])
        if len(row) != len(cols):
            raise MalformedRecord(f"expected {len(cols)} columns, got {len(row)}")
        raw = dict(zip(cols, row))
    else:
        raise ValueError(f"unknown format {format!r}")
    return record_from_mapping(raw, stats)


class Blacklist:
    """Immutable suffix -> category map with longest-registered-suffix lookup."""

    def __init__(self, entries: dict[str, DomainCategory] | None = None):
        self._entries: dict[str, DomainCategory] = {}
        for dom, cat in (entries or {}).items():
            dom = dom.strip().lower().strip(".")
            if not dom:
                raise BlacklistError("empty domain suffix")
            self._entries[dom] = DomainCategory(cat)
        self._cache: dict[str, DomainCategory] = {}

    @classmethod
    def from_csv(cls, path: str | Path) -> Blacklist:
        entries: dict[str, DomainCategory] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or row[0].startswith("#"):
                    continue
                if lineno == 1 and row[0].strip().lower() == "domain":
                    continue
                if len(row) != 2:
                    raise BlacklistError(f"{path}:{lineno}: expected domain,category")
                dom = row[0].strip().lower().strip(".")
                try:
                    cat = parse_category(row[1])
                except BlacklistError:
                    raise BlacklistError(f"{path}:{lineno}: unknown category {row[1]!r}") from None
                if dom in entries:
                    raise BlacklistError(f"{path}:{lineno}: duplicate suffix {dom!r}")
                entries[dom] = cat
        return cls(entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def classify(self, host: str) -> DomainCategory:
        cat = self._cache.get(host)
        if cat is not None:
            return cat
        h = host.lower().rstrip(".")
        cat = DomainCategory.REST
        while True:
            hit = self._entries.get(h)
            if hit is not None:
                cat = hit
                break
            dot = h.find(".")
            if dot < 0:
                break
            h = h[dot + 1:]
        if len(self._cache) < 1_000_000:
            self._cache[host] = cat
        return cat


def classify_domain(host: str, bl: Blacklist) -> DomainCategory:
    return bl.classify(host)


def _open_text(path: str | Path) -> IO[str]:
    p = str(path)
    if p.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(p, "rb"), encoding="utf-8")
    return open(p, encoding="utf-8", newline="")


def detect_format(path: str | Path) -> str:
    name = str(path).removesuffix(".gz")
    return "csv" if name.endswith(".csv") else "json_lines"


def iter_records(lines: Iterable[str], format: str = "json_lines",
                 stats: IngestStats | None = None,
                 window: tuple[int, int] | None = None) -> Iterator[HttpRequestRecord]:
    """Parse a stream of lines, counting (not raising on) malformed ones.

    ``window`` is an inclusive ``(start_ms, end_ms)`` filter; records outside it
    are counted as skipped.
    """
    stats = stats if stats is not None else IngestStats()
    header: list[str] | None = None
    for line in lines:
        if format == "csv" and header is None:
            header = next(csv.reader([line]))
            continue
        if not line.strip():
            continue
        stats.lines += 1
        try:
            rec = parse_record(line, format, header, stats)
        except MalformedRecord as exc:
            stats.malformed += 1
            log.debug("skipping malformed record: %s", exc)
            continue
        if window is not None and not (window[0] <= rec.timestamp <= window[1]):
            stats.out_of_window += 1
            continue
        stats.parsed += 1
        yield rec


def read_log(path: str | Path, stats: IngestStats | None = None,
             window: tuple[int, int] | None = None) -> Iterator[HttpRequestRecord]:
    fmt = detect_format(path)
    with _open_text(path) as fh:
        yield from iter_records(fh, fmt, stats, window)


def partition_by_user(records: Iterable[HttpRequestRecord]) -> dict[str, list[HttpRequestRecord]]:
    """Group records per user; each group is stably sorted by timestamp."""
    groups: dict[str, list[HttpRequestRecord]] = defaultdict(list)
    for r in records:
        groups[r.user_id].append(r)
    for recs in groups.values():
        recs.sort(key=lambda r: r.timestamp)
    return dict(groups)


@dataclass
class CategoryCounts:
    """Per-category request tallies; merges associatively across shards."""

    counts: dict[DomainCategory, int] = field(default_factory=dict)

    def add(self, cat: DomainCategory, n: int = 1) -> None:
        self.counts[cat] = self.counts.get(cat, 0) + n

    def merge(self, other: CategoryCounts) -> CategoryCounts:
        out = dict(self.counts)
        for k, v in other.counts.items():
            out[k] = out.get(k, 0) + v
        return CategoryCounts(out)
