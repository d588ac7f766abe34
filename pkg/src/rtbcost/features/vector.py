"""Per-notification feature vectors built causally from a user's traffic."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from typing import Any
from zoneinfo import ZoneInfo

from ..ingest import Blacklist, DomainCategory, HttpRequestRecord
from ..nurl import PriceNotification, _host_from, registrable_domain
from .cookiesync import CookieSyncTracker
from .geo import GeoTable
from .interests import IabMap, InterestProfile, interests_from_counts, EmptyProfile
from .useragent import DeviceProfile, parse_user_agent

TOD_BUCKETS = ("12am-9am", "9am-6pm", "6pm-12am")
DAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
OTHER = "other"

BEACON_MAX_BYTES = 1024
_BEACON_PATH = re.compile(r"\.(gif|png|jpe?g|webp)$|pixel|beacon|/p\b|/t\b", re.IGNORECASE)


class MissingGeo(ValueError):
    pass


def tod_bucket(hour: int) -> str:
    if hour < 9:
        return TOD_BUCKETS[0]
    if hour < 18:
        return TOD_BUCKETS[1]
    return TOD_BUCKETS[2]


@dataclass(frozen=True)
class CoreFeatures:
    """Reduced feature set used by the price model."""

    interaction: str
    device_type: str
    os: str
    city: str
    tod_bucket: str
    day_of_week: str
    ad_size: str
    publisher_iab: str
    adx_id: str
    hour_of_day: int

    CATEGORICAL = ("interaction", "device_type", "os", "city", "tod_bucket",
                   "day_of_week", "ad_size", "publisher_iab", "adx_id")
    NUMERIC = ("hour_of_day",)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CoreFeatures:
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown core feature fields {sorted(extra)}")
        missing = names - set(d)
        if missing:
            raise ValueError(f"missing core feature fields {sorted(missing)}")
        vals = {k: (str(d[k]) if k != "hour_of_day" else int(d[k])) for k in names}
        if not 0 <= vals["hour_of_day"] <= 23:
            raise ValueError("hour_of_day out of range")
        return cls(**vals)


@dataclass(frozen=True)
class UserAggregates:
    beacon_count: int = 0
    cookie_sync_count: int = 0
    publishers_visited: int = 0
    total_bytes: int = 0
    total_requests: int = 0
    total_duration_ms: int = 0

    @property
    def avg_bytes_per_request(self) -> float:
        return self.total_bytes / self.total_requests if self.total_requests else 0.0

    @property
    def avg_duration_per_request(self) -> float:
        return self.total_duration_ms / self.total_requests if self.total_requests else 0.0

    def merge(self, other: UserAggregates) -> UserAggregates:
        # cookie_sync_count / publishers_visited are additive only across disjoint shards
        return UserAggregates(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))


@dataclass(frozen=True)
class FeatureVector:
    """Full feature set of one notification. ``None`` marks a missing value."""

    # geo-temporal
    city: str | None
    hour_of_day: int
    tod_bucket: str
    day_of_week: str
    is_weekend: bool
    unique_locations: int
    # user
    device: DeviceProfile
    interests: InterestProfile | None
    aggregates: UserAggregates
    # ad
    ad_size: str | None
    adx_id: str
    dsp_domain: str | None
    publisher: str | None
    publisher_iab: str | None
    campaign_popularity: int | None
    url_param_count: int
    request_bytes: int
    advertiser_requests: int
    advertiser_bytes: int
    advertiser_avg_duration: float

    def flat(self) -> dict[str, Any]:
        """Flattened mapping used by feature selection (missing -> None)."""
        a = self.aggregates
        return {
            "hour_of_day": self.hour_of_day,
            "tod_bucket": self.tod_bucket,
            "day_of_week": self.day_of_week,
            "is_weekend": int(self.is_weekend),
            "city": self.city,
            "unique_locations": self.unique_locations,
            "interaction": self.device.interaction,
            "device_type": self.device.device_type,
            "os": self.device.os,
            "top_interest": self.interests.top() if self.interests else None,
            "beacon_count": a.beacon_count,
            "cookie_sync_count": a.cookie_sync_count,
            "publishers_visited": a.publishers_visited,
            "total_bytes": a.total_bytes,
            "total_requests": a.total_requests,
            "avg_bytes_per_request": a.avg_bytes_per_request,
            "total_duration_ms": a.total_duration_ms,
            "avg_duration_per_request": a.avg_duration_per_request,
            "ad_size": self.ad_size,
            "adx_id": self.adx_id,
            "dsp_domain": self.dsp_domain,
            "publisher_iab": self.publisher_iab,
            "campaign_popularity": self.campaign_popularity,
            "url_param_count": self.url_param_count,
            "request_bytes": self.request_bytes,
            "advertiser_requests": self.advertiser_requests,
            "advertiser_bytes": self.advertiser_bytes,
            "advertiser_avg_duration": self.advertiser_avg_duration,
        }


# Semantic groups of FeatureVector.flat() keys used for subset search.
FEATURE_GROUPS: dict[str, tuple[str, ...]] = {
    "A": ("hour_of_day", "tod_bucket", "day_of_week", "is_weekend"),
    "B": ("url_param_count", "request_bytes"),
    "C": ("ad_size", "adx_id", "campaign_popularity"),
    "D": ("dsp_domain", "advertiser_requests", "advertiser_bytes", "advertiser_avg_duration"),
    "E": ("publisher_iab",),
    "F": ("interaction", "device_type", "os", "beacon_count", "cookie_sync_count",
          "publishers_visited", "total_bytes", "total_requests", "avg_bytes_per_request",
          "total_duration_ms", "avg_duration_per_request"),
    "G": ("top_interest",),
    "H": ("city", "unique_locations"),
}


@dataclass
class References:
    """Immutable reference tables shared by every user partition."""

    blacklist: Blacklist = field(default_factory=Blacklist)
    geo: GeoTable = field(default_factory=GeoTable)
    iab: IabMap = field(default_factory=IabMap)
    tz: str = "UTC"

    def __post_init__(self):
        self._zone = timezone.utc if self.tz == "UTC" else ZoneInfo(self.tz)

    def local_time(self, ts_ms: int) -> datetime:
        return datetime.fromtimestamp(ts_ms / 1000, tz=self._zone)


def is_beacon(rec: HttpRequestRecord, cat: DomainCategory) -> bool:
    if cat not in (DomainCategory.ADVERTISING, DomainCategory.ANALYTICS):
        return False
    if rec.bytes_in > BEACON_MAX_BYTES:
        return False
    path = rec.url.split("?", 1)[0]
    return bool(_BEACON_PATH.search(path))


class UserContext:
    """Running per-user state; holds only what has been observed so far."""

    def __init__(self, refs: References):
        self.refs = refs
        self.total_requests = 0
        self.total_bytes = 0
        self.total_duration_ms = 0
        self.beacons = 0
        self.sync = CookieSyncTracker()
        self.publishers: set[str] = set()
        self.iab_visits: Counter[str] = Counter()
        self.locations: set[str] = set()
        self.advertiser: dict[str, list[int]] = {}  # registrable -> [requests, bytes, duration]
        self.campaigns: Counter[str] = Counter()
        self.last_page: str | None = None
        self.last: HttpRequestRecord | None = None
        self.last_city: str | None = None

    def city_of(self, rec: HttpRequestRecord) -> str | None:
        return rec.city or self.refs.geo.lookup(rec.client_ip)

    def observe(self, rec: HttpRequestRecord, cat: DomainCategory | None = None,
                notification: PriceNotification | None = None) -> None:
        if cat is None:
            cat = self.refs.blacklist.classify(rec.host)
        self.total_requests += 1
        self.total_bytes += rec.bytes_in + rec.bytes_out
        self.total_duration_ms += rec.duration_ms
        if is_beacon(rec, cat):
            self.beacons += 1
        if "?" in rec.url:
            self.sync.observe(rec.host, rec.url)
        if cat in (DomainCategory.REST, DomainCategory.THIRD_PARTY_CONTENT, DomainCategory.SOCIAL):
            dom = registrable_domain(rec.host)
            if cat == DomainCategory.REST:
                self.publishers.add(dom)
                self.last_page = rec.host
            code = self.refs.iab.lookup(rec.host)
            if code is not None:
                self.iab_visits[code] += 1
        else:
            slot = self.advertiser.setdefault(registrable_domain(rec.host), [0, 0, 0])
            slot[0] += 1
            slot[1] += rec.bytes_in + rec.bytes_out
            slot[2] += rec.duration_ms
        city = self.city_of(rec)
        if city is not None:
            self.locations.add(city)
            self.last_city = city
        if notification is not None and notification.campaign_id:
            self.campaigns[notification.campaign_id] += 1
        self.last = rec

    @classmethod
    def from_records(cls, records, refs: References, rules=None, until: int | None = None) -> UserContext:
        """Replay a stream prefix (timestamps <= ``until``)."""
        from ..nurl import detect

        ctx = cls(refs)
        for rec in records:
            if until is not None and rec.timestamp > until:
                break
            n = detect(rec, rules) if rules else None
            ctx.observe(rec, notification=n)
        return ctx

    def aggregates(self) -> UserAggregates:
        return UserAggregates(
            beacon_count=self.beacons,
            cookie_sync_count=self.sync.count,
            publishers_visited=len(self.publishers),
            total_bytes=self.total_bytes,
            total_requests=self.total_requests,
            total_duration_ms=self.total_duration_ms,
        )


def _size_str(size: tuple[int, int] | None) -> str | None:
    return f"{size[0]}x{size[1]}" if size else None


def build_features(n: PriceNotification, ctx: UserContext, record: HttpRequestRecord | None = None,
                   require_geo: bool = False) -> FeatureVector:
    """Features of ``n`` from the context observed up to (and including) its request."""
    rec = record if record is not None else ctx.last
    if rec is None:
        raise ValueError("context has not observed the notification's request")
    refs = ctx.refs
    city = ctx.city_of(rec)
    if city is None and require_geo:
        raise MissingGeo(f"no city for user {n.user_id} at {n.timestamp}")
    t = refs.local_time(n.timestamp)
    dow = DAYS[t.weekday()]

    pub_host = _host_from(n.publisher) if n.publisher else None
    if pub_host is None and rec.referer:
        pub_host = _host_from(rec.referer)
    if pub_host is None:
        pub_host = ctx.last_page

    try:
        interests = interests_from_counts(ctx.iab_visits)
    except EmptyProfile:
        interests = None

    adv = ctx.advertiser.get(registrable_domain(n.dsp_domain), [0, 0, 0]) if n.dsp_domain else [0, 0, 0]

    return FeatureVector(
        city=city,
        hour_of_day=t.hour,
        tod_bucket=tod_bucket(t.hour),
        day_of_week=dow,
        is_weekend=t.weekday() >= 5,
        unique_locations=len(ctx.locations),
        device=parse_user_agent(rec.user_agent),
        interests=interests,
        aggregates=ctx.aggregates(),
        ad_size=_size_str(n.ad_size),
        adx_id=n.adx_id,
        dsp_domain=registrable_domain(n.dsp_domain) if n.dsp_domain else None,
        publisher=pub_host,
        publisher_iab=refs.iab.lookup(pub_host),
        campaign_popularity=ctx.campaigns.get(n.campaign_id, 0) if n.campaign_id else None,
        url_param_count=n.param_count,
        request_bytes=rec.bytes_out,
        advertiser_requests=adv[0],
        advertiser_bytes=adv[1],
        advertiser_avg_duration=adv[2] / adv[0] if adv[0] else 0.0,
    )


def project(f: FeatureVector) -> CoreFeatures:
    """Core features; missing categorical values collapse to ``"other"``."""
    return CoreFeatures(
        interaction=f.device.interaction,
        device_type=f.device.device_type,
        os=f.device.os,
        city=f.city or OTHER,
        tod_bucket=f.tod_bucket,
        day_of_week=f.day_of_week,
        ad_size=f.ad_size or OTHER,
        publisher_iab=f.publisher_iab or OTHER,
        adx_id=f.adx_id,
        hour_of_day=f.hour_of_day,
    )
