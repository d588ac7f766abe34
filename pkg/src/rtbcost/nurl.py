"""Detection of RTB winning-price notification URLs (nURLs) and price extraction."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Iterable
from urllib.parse import parse_qsl, urlsplit

from .ingest import HttpRequestRecord

RULES_SCHEMA_VERSION = 1

METADATA_FIELDS = frozenset({
    "ad_size", "ad_width", "ad_height", "campaign_id", "impression_id",
    "bidder_name", "publisher", "currency", "dsp_domain",
})

MAX_CPM = Decimal(10_000)
_DECIMAL_RE = re.compile(r"^(?:\d+\.?\d*|\.\d+)$")
_TOKEN_RE = re.compile(r"^[A-Za-z0-9_\-%]{8,}$")
_SIZE_RE = re.compile(r"^(\d{1,5})[xX*](\d{1,5})$")


class UnrecognizedPrice(ValueError):
    pass


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class Cleartext:
    cpm: Decimal
    currency: str = "USD"


@dataclass(frozen=True)
class Encrypted:
    token: str


PriceValue = Cleartext | Encrypted


@dataclass(frozen=True)
class PriceParam:
    name: str
    tag: str  # "charge" | "bid"


@dataclass(frozen=True)
class MacroRule:
    adx_id: str
    host_pattern: str
    price_params: tuple[PriceParam, ...]
    metadata_params: dict[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if not self.host_pattern:
            raise RuleError(f"{self.adx_id}: empty host_pattern")
        if not any(p.tag == "charge" for p in self.price_params):
            raise RuleError(f"{self.adx_id}: no charge-tagged price param")
        for p in self.price_params:
            if p.tag not in ("charge", "bid"):
                raise RuleError(f"{self.adx_id}: bad price tag {p.tag!r}")
        bad = set(self.metadata_params.values()) - METADATA_FIELDS
        if bad:
            raise RuleError(f"{self.adx_id}: unknown metadata fields {sorted(bad)}")

    def matches_host(self, host: str) -> bool:
        pat = self.host_pattern
        return host == pat or host.endswith("." + pat)

    @classmethod
    def from_dict(cls, d: dict) -> MacroRule:
        return cls(
            adx_id=d["adx_id"],
            host_pattern=d["host_pattern"].lower().strip("."),
            price_params=tuple(PriceParam(p["name"], p["tag"]) for p in d["price_params"]),
            metadata_params=dict(d.get("metadata_params", {})),
        )

    def to_dict(self) -> dict:
        return {
            "adx_id": self.adx_id,
            "host_pattern": self.host_pattern,
            "price_params": [{"name": p.name, "tag": p.tag} for p in self.price_params],
            "metadata_params": dict(self.metadata_params),
        }


@dataclass(frozen=True)
class PriceNotification:
    user_id: str
    timestamp: int
    adx_id: str
    price: PriceValue
    raw_url: str
    dsp_domain: str | None = None
    ad_size: tuple[int, int] | None = None
    impression_id: str | None = None
    campaign_id: str | None = None
    bidder_name: str | None = None
    publisher: str | None = None
    bid_price: str | None = None
    param_count: int = 0

    @property
    def key(self) -> tuple[str, int, str]:
        """Identity of the notification within a user's stream."""
        return (self.user_id, self.timestamp, self.raw_url)

    @property
    def is_encrypted(self) -> bool:
        return isinstance(self.price, Encrypted)


def load_rules(path: str | Path | None = None) -> list[MacroRule]:
    """Load a macro rule file; ``None`` loads the bundled rules.

    Accepts ``{"schema_version": 1, "rules": [...]}`` or a bare array whose
    objects each carry ``schema_version``.
    """
    if path is None:
        text = resources.files("rtbcost.data").joinpath("macro_rules.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    doc = json.loads(text)
    if isinstance(doc, dict):
        versions = {doc.get("schema_version")}
        items = doc.get("rules", [])
    else:
        versions = {d.get("schema_version") for d in doc}
        items = doc
    if versions != {RULES_SCHEMA_VERSION}:
        raise RuleError(f"unsupported macro rule schema_version {sorted(map(str, versions))}")
    rules = [MacroRule.from_dict(d) for d in items]
    ids = [r.adx_id for r in rules]
    if len(ids) != len(set(ids)):
        raise RuleError("duplicate adx_id in macro rules")
    return rules


def classify_price(raw: str) -> PriceValue:
    """Classify an already URL-decoded price parameter value."""
    s = raw.strip()
    if not s:
        raise UnrecognizedPrice("empty price")
    if _DECIMAL_RE.match(s):
        try:
            v = Decimal(s)
        except InvalidOperation:
            v = None
        if v is not None and v.is_finite() and 0 < v < MAX_CPM:
            return Cleartext(v)
    if _TOKEN_RE.match(s):
        return Encrypted(s)
    raise UnrecognizedPrice(f"unrecognized price {raw[:40]!r}")


def registrable_domain(host: str) -> str:
    """Crude eTLD+1: last two labels, three for common two-level suffixes."""
    labels = host.lower().strip(".").split(".")
    if len(labels) <= 2:
        return ".".join(labels)
    if labels[-2] in ("co", "com", "org", "net", "ac", "gov", "edu") and len(labels[-1]) == 2:
        return ".".join(labels[-3:])
    return ".".join(labels[-2:])


def _host_from(value: str) -> str | None:
    v = value.strip()
    if "://" in v:
        return urlsplit(v).hostname
    v = v.split("/", 1)[0].lower()
    if "." in v and re.fullmatch(r"[a-z0-9.\-]+", v):
        return v
    return None


def _parse_size(value: str) -> tuple[int, int] | None:
    m = _SIZE_RE.match(value.strip())
    if not m:
        return None
    return int(m.group(1)), int(m.group(2))


def _match_rule(host: str, rules: Iterable[MacroRule]) -> MacroRule | None:
    best = None
    for rule in rules:
        if rule.matches_host(host) and (best is None or len(rule.host_pattern) > len(best.host_pattern)):
            best = rule
    return best


def detect(record: HttpRequestRecord, rules: list[MacroRule]) -> PriceNotification | None:
    """Return the price notification carried by ``record``, if any."""
    rule = _match_rule(record.host, rules)
    if rule is None:
        return None
    query = urlsplit(record.url).query
    if not query:
        return None
    params: dict[str, str] = {}
    pairs = parse_qsl(query, keep_blank_values=True)
    for k, v in pairs:
        params.setdefault(k, v)

    price: PriceValue | None = None
    bid: str | None = None
    for p in rule.price_params:
        if p.name not in params:
            continue
        if p.tag == "bid":
            if bid is None:
                bid = params[p.name]
            continue
        if price is None:
            try:
                price = classify_price(params[p.name])
            except UnrecognizedPrice:
                continue
    if price is None:
        return None

    meta: dict[str, str] = {}
    for pname, fname in rule.metadata_params.items():
        if pname in params and params[pname] != "" and fname not in meta:
            meta[fname] = params[pname]

    if isinstance(price, Cleartext) and meta.get("currency"):
        price = Cleartext(price.cpm, meta["currency"].upper())

    size = _parse_size(meta["ad_size"]) if "ad_size" in meta else None
    if size is None and "ad_width" in meta and "ad_height" in meta:
        size = _parse_size(f"{meta['ad_width']}x{meta['ad_height']}")

    dsp = _host_from(meta["dsp_domain"]) if "dsp_domain" in meta else None
    if dsp is None:
        own = registrable_domain(record.host)
        for _, v in pairs:
            if "://" in v:
                h = urlsplit(v).hostname
                if h and registrable_domain(h) != own:
                    dsp = h
                    break

    return PriceNotification(
        user_id=record.user_id,
        timestamp=record.timestamp,
        adx_id=rule.adx_id,
        price=price,
        raw_url=record.url,
        dsp_domain=dsp,
        ad_size=size,
        impression_id=meta.get("impression_id"),
        campaign_id=meta.get("campaign_id"),
        bidder_name=meta.get("bidder_name"),
        publisher=meta.get("publisher"),
        bid_price=bid,
        param_count=len(pairs),
    )


def pair_adx_dsp(n: PriceNotification) -> tuple[str, str] | None:
    if not n.dsp_domain:
        return None
    return n.adx_id, registrable_domain(n.dsp_domain)
