"""Synthetic RTB marketplace producing weblogs plus a sealed price ledger."""

from __future__ import annotations

import csv
import json
import math
import string
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..costs import MICROS
from ..features.geo import GeoTable
from ..features.interests import IabMap
from ..features.vector import DAYS, CoreFeatures, References, tod_bucket
from ..ingest import Blacklist, parse_category
from ..model.binning import PriceBinning, fit_binning
from .auction import run_auction
from .tokens import PriceKey, encode_price

DAY_MS = 86_400_000
DEFAULT_START_MS = 1_451_865_600_000  # Monday 2016-01-04 00:00 UTC


TEMPLATES = {
    "mopub": "https://cpp.imp.mpx.mopub.com/imp?ad_domain={dsp}&ads_creative_id={cid}&bidder_name={bidder}"
             "&bid_price={bid}&charge_price={price}&currency=USD&mopub_id={imp}&pub_name={pub}"
             "&ad_size={size}&dsp_domain={dsp}",
    "openx": "https://rtb.openx.net/w/1.0/win?wp={price}&sz={size}&cid={cid}&auid={imp}&pub={pub}"
             "&cb=http%3A%2F%2Fwin.{dsp}%2Fn%3Fi%3D{imp}",
    "rubicon-relay": "https://pixel.mathtag.com/event/img?mt_exid=rubicon&price={price}&sz={size}&cid={cid}"
                     "&imp={imp}&pub={pub}&3pck=http%3A%2F%2Fbeacon.{dsp}%2Frb%3Fid%3D{imp}",
    "doubleclick": "https://googleads.g.doubleclick.net/pagead/adview?pr={price}&sz={size}&cid={cid}"
                   "&imp={imp}&url=http%3A%2F%2F{pub}%2F&adurl=http%3A%2F%2Fclk.{dsp}%2Fc%3F{cid}",
    "pulsepoint": "https://bh.contextweb.com/bh/rtset?wp={price}&sz={size}&cid={cid}&imp={imp}&pub={pub}"
                  "&dsp={dsp}",
}

ADX_DOMAINS = {"mopub": "mopub.com", "openx": "openx.net", "rubicon-relay": "mathtag.com",
               "doubleclick": "doubleclick.net", "pulsepoint": "contextweb.com"}


@dataclass(frozen=True)
class AdxSpec:
    adx_id: str
    policy: str  # "cleartext" | "encrypted"
    weight: float = 1.0

    def __post_init__(self):
        if self.policy not in ("cleartext", "encrypted"):
            raise ValueError(f"unknown notification policy {self.policy!r}")
        if self.adx_id not in TEMPLATES:
            raise ValueError(f"no nURL template for {self.adx_id!r}")


@dataclass(frozen=True)
class DspSpec:
    domain: str
    aggressiveness: float = 1.0
    noise: float = 0.02


@dataclass(frozen=True)
class PriceLaw:
    """Base CPM times per-feature multiplicative effects, with lognormal noise."""

    base_cpm: float = 0.5
    effects: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    sigma: float = 0.3

    def mean(self, core: CoreFeatures) -> float:
        v = self.base_cpm
        for f, table in self.effects.items():
            v *= table.get(str(getattr(core, f)), 1.0)
        return v


DEFAULT_EFFECTS: dict[str, dict[str, float]] = {
    "interaction": {"app": 2.6, "mobile_web": 1.0},
    "os": {"ios": 1.3, "android": 1.0},
    "device_type": {"tablet": 1.99, "smartphone": 1.0},
    "adx_id": {"mopub": 1.0, "openx": 0.36, "rubicon-relay": 2.72, "doubleclick": 4.43, "pulsepoint": 0.55},
    "ad_size": {"320x50": 0.26, "300x250": 1.77, "320x480": 6.47, "728x90": 0.84, "768x1024": 7.22},
    "publisher_iab": {"IAB1": 0.31, "IAB2": 8.41, "IAB3": 3.82, "IAB7": 2.22, "IAB9": 0.17, "IAB12": 0.68,
                      "IAB13": 11.47, "IAB17": 1.36, "IAB19": 5.76, "IAB20": 2.98, "IAB22": 0.42},
    "tod_bucket": {"12am-9am": 0.61, "9am-6pm": 1.0, "6pm-12am": 1.56},
    "day_of_week": {"sat": 1.18, "sun": 1.18},
    "city": {"Madrid": 1.36, "Barcelona": 1.18, "Valencia": 0.84, "Seville": 0.76},
}

DEFAULT_PUBLISHERS: tuple[tuple[str, str], ...] = (
    ("elnoticiero.es", "IAB12"), ("diariodeportes.com", "IAB17"), ("motorpista.es", "IAB2"),
    ("finanzahoy.com", "IAB13"), ("cocinafacil.es", "IAB8"), ("viajeros.net", "IAB20"),
    ("saludplus.es", "IAB7"), ("tecnored.com", "IAB19"), ("cineymas.es", "IAB1"),
    ("juegosya.com", "IAB9"), ("compraventa.es", "IAB22"), ("empleoes.com", "IAB3"),
    ("futbolmania.es", "IAB17"), ("bolsaactual.com", "IAB13"), ("gadgetzona.es", "IAB19"),
    ("pelisonline.es", "IAB1"), ("escapadas.es", "IAB20"), ("mercadillo.com", "IAB22"),
)

DEFAULT_ADXS: tuple[AdxSpec, ...] = (
    AdxSpec("mopub", "cleartext", 3.0),
    AdxSpec("openx", "encrypted", 1.5),
    AdxSpec("rubicon-relay", "encrypted", 1.0),
    AdxSpec("doubleclick", "encrypted", 2.0),
    AdxSpec("pulsepoint", "encrypted", 1.0),
)

DEFAULT_DSPS: tuple[DspSpec, ...] = (
    DspSpec("adsrvr.org", 1.0), DspSpec("criteo.com", 0.97), DspSpec("turn.com", 0.94),
    DspSpec("rfihub.com", 0.9),
)

CITIES: dict[str, str] = {
    "Madrid": "81.32.0.0/16", "Barcelona": "83.40.0.0/16",
    "Valencia": "88.12.0.0/16", "Seville": "90.160.0.0/16",
}

SIZES = {"smartphone": ("320x50", "300x250", "320x480"), "tablet": ("728x90", "300x250", "768x1024")}
SIZE_WEIGHTS = (0.5, 0.35, 0.15)

# hourly activity weights (UTC treated as local time)
DIURNAL = np.array([1, .6, .4, .3, .3, .4, .8, 1.5, 2, 2, 2, 2.2, 2.5, 2.4, 2, 2, 2.2, 2.5,
                    3, 3.4, 3.6, 3.4, 2.6, 1.6])

UA = {
    ("smartphone", "android", "mobile_web"): "Mozilla/5.0 (Linux; Android 6.0.1; SM-G920F Build/MMB29K) "
        "AppleWebKit/537.36 (KHTML, like Gecko) Chrome/52.0.2743.98 Mobile Safari/537.36",
    ("tablet", "android", "mobile_web"): "Mozilla/5.0 (Linux; Android 5.1.1; SM-T560 Build/LMY47X) "
        "AppleWebKit/537.36 (KHTML, like Gecko) Chrome/51.0.2704.81 Safari/537.36",
    ("smartphone", "android", "app"): "Dalvik/2.1.0 (Linux; U; Android 6.0.1; SM-G920F Build/MMB29K)",
    ("tablet", "android", "app"): "Mozilla/5.0 (Linux; Android 5.1.1; SM-T560 Build/LMY47X; wv) "
        "AppleWebKit/537.36 (KHTML, like Gecko) Version/4.0 Chrome/51.0.2704.81 Safari/537.36",
    ("smartphone", "ios", "mobile_web"): "Mozilla/5.0 (iPhone; CPU iPhone OS 9_3_2 like Mac OS X) "
        "AppleWebKit/601.1.46 (KHTML, like Gecko) Version/9.0 Mobile/13F69 Safari/601.1",
    ("tablet", "ios", "mobile_web"): "Mozilla/5.0 (iPad; CPU OS 9_3_2 like Mac OS X) "
        "AppleWebKit/601.1.46 (KHTML, like Gecko) Version/9.0 Mobile/13F69 Safari/601.1",
    ("smartphone", "ios", "app"): "NewsReader/4.2.1 CFNetwork/758.4.3 Darwin/15.5.0",
    ("tablet", "ios", "app"): "Mozilla/5.0 (iPad; CPU OS 9_3_2 like Mac OS X) "
        "AppleWebKit/601.1.46 (KHTML, like Gecko) Mobile/13F69",
}

_ALNUM = string.ascii_letters + string.digits


@dataclass(frozen=True)
class SimConfig:
    seed: int = 7
    n_users: int = 300
    days: int = 7
    start_ms: int = DEFAULT_START_MS
    ads_per_day: float = 10.0
    app_share: float = 0.5
    tablet_share: float = 0.3
    ios_share: float = 0.45
    publishers: tuple[tuple[str, str], ...] = DEFAULT_PUBLISHERS
    adxs: tuple[AdxSpec, ...] = DEFAULT_ADXS
    dsps: tuple[DspSpec, ...] = DEFAULT_DSPS
    price_law: PriceLaw = field(default_factory=lambda: PriceLaw(base_cpm=0.15, effects=DEFAULT_EFFECTS))
    binning_k: int = 4

    def __post_init__(self):
        if len(self.dsps) < 2:
            raise ValueError("at least two DSPs are needed for a second-price auction")
        if not self.adxs:
            raise ValueError("at least one ADX is needed")
        if self.n_users < 1 or self.days < 1:
            raise ValueError("n_users and days must be positive")

    def with_overrides(self, **kw: Any) -> SimConfig:
        """Apply flat overrides: ``sigma``, ``cleartext_only``, ``zero_noise`` or any field."""
        cfg = self
        if kw.pop("zero_noise", False):
            cfg = zero_noise(cfg)
        if kw.pop("cleartext_only", False):
            cfg = replace(cfg, adxs=tuple(replace(a, policy="cleartext") for a in cfg.adxs))
        if "sigma" in kw:
            cfg = replace(cfg, price_law=replace(cfg.price_law, sigma=float(kw.pop("sigma"))))
        unknown = set(kw) - {f for f in self.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown simulation settings {sorted(unknown)}")
        return replace(cfg, **kw)


def zero_noise(cfg: SimConfig | None = None) -> SimConfig:
    """Noise-free law over interaction and OS only: exactly four price levels."""
    cfg = cfg or SimConfig()
    law = PriceLaw(base_cpm=0.5, effects={"interaction": {"app": 2.6, "mobile_web": 1.0},
                                          "os": {"ios": 1.3, "android": 1.0}}, sigma=0.0)
    return replace(cfg, price_law=law, dsps=tuple(replace(d, noise=0.0) for d in cfg.dsps))


@dataclass(frozen=True)
class ImpressionTruth:
    user_id: str
    timestamp: int
    adx_id: str
    dsp: str
    charge_micros: int
    bid_micros: int
    price_class: int
    token: str | None
    features: CoreFeatures

    def to_dict(self) -> dict:
        d = asdict(self)
        d["features"] = self.features.to_dict()
        return d


@dataclass
class SealedLedger:
    """Encrypted token -> (true charge CPM, true class under the reference binning)."""

    binning: PriceBinning
    entries: dict[str, tuple[int, int]] = field(default_factory=dict)  # token -> (micros, class)

    def cpm(self, token: str) -> float:
        return self.entries[token][0] / MICROS

    def true_class(self, token: str) -> int:
        return self.entries[token][1]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "binning": self.binning.to_dict(),
            "tokens": {t: {"micros": m, "cpm": m / MICROS, "class": c} for t, (m, c) in sorted(self.entries.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SealedLedger:
        return cls(PriceBinning.from_dict(d["binning"]),
                   {t: (int(v["micros"]), int(v["class"])) for t, v in d["tokens"].items()})

    @classmethod
    def load(cls, path: str | Path) -> SealedLedger:
        return cls.from_dict(json.loads(Path(path).read_text()))


class LedgerOracle:
    """Estimator that reads the true class from the sealed ledger and returns
    that class's representative; cleartext-only stand-in for a perfect model."""

    def __init__(self, ledger: SealedLedger, binning: PriceBinning | None = None):
        self.ledger = ledger
        self.binning = binning or ledger.binning

    def estimate(self, notification: Any, core: Any) -> float:
        return self.binning.representatives[self.ledger.true_class(notification.price.token)]


@dataclass(frozen=True)
class AuctionLog:
    bids: tuple[tuple[str, int], ...]
    winner: str
    charge_micros: int


@dataclass
class SimResult:
    config: SimConfig
    records: list[dict]
    impressions: list[ImpressionTruth]
    auctions: list[AuctionLog]
    ledger: SealedLedger

    @property
    def binning(self) -> PriceBinning:
        return self.ledger.binning


def _rand_id(rng: np.random.Generator, n: int) -> str:
    return "".join(_ALNUM[i] for i in rng.integers(0, len(_ALNUM), n))


def _fmt_cpm(micros: int) -> str:
    s = f"{micros // MICROS}.{micros % MICROS:06d}".rstrip("0")
    return s + "0" if s.endswith(".") else s


@dataclass
class _User:
    uid: str
    device_type: str
    os: str
    app_propensity: float
    city: str
    ip: str
    prefs: np.ndarray
    sync_ids: dict[str, str]


def _ip_in(cidr: str, rng: np.random.Generator) -> str:
    base = cidr.split("/")[0].split(".")
    return f"{base[0]}.{base[1]}.{int(rng.integers(0, 256))}.{int(rng.integers(1, 255))}"


def simulate(cfg: SimConfig | None = None) -> SimResult:
    cfg = cfg or SimConfig()
    rng = np.random.default_rng(cfg.seed)
    key = PriceKey.from_seed(cfg.seed)
    pubs = cfg.publishers
    cities = list(CITIES)
    adx_w = np.array([a.weight for a in cfg.adxs], dtype=float)
    adx_w /= adx_w.sum()
    hour_w = DIURNAL / DIURNAL.sum()

    users = []
    for u in range(cfg.n_users):
        dev = "tablet" if rng.random() < cfg.tablet_share else "smartphone"
        os_ = "ios" if rng.random() < cfg.ios_share else "android"
        city = cities[int(rng.integers(len(cities)))]
        users.append(_User(
            uid=f"u{u:05d}", device_type=dev, os=os_,
            app_propensity=_propensity(rng, cfg.app_share),
            city=city, ip=_ip_in(CITIES[city], rng),
            prefs=rng.dirichlet(np.full(len(pubs), 0.6)),
            sync_ids={d.domain: _rand_id(rng, 22) for d in cfg.dsps},
        ))

    pending = []  # (ts, order, record dict, truth-or-None)
    auctions: list[AuctionLog] = []
    order = 0
    for user in users:
        for day in range(cfg.days):
            n_ads = int(rng.poisson(cfg.ads_per_day))
            hours = np.sort(rng.choice(24, size=n_ads, p=hour_w))
            for h in hours:
                ts = cfg.start_ms + day * DAY_MS + int(h) * 3_600_000 + int(rng.integers(0, 3_500_000))
                interaction = "app" if rng.random() < user.app_propensity else "mobile_web"
                ua = UA[(user.device_type, user.os, interaction)]
                p = int(rng.choice(len(pubs), p=user.prefs))
                pub_dom, iab = pubs[p]
                pub_host = f"{'app' if interaction == 'app' else 'www'}.{pub_dom}"
                page = (f"https://{pub_host}/api/v2/feed?item={int(rng.integers(1e6))}" if interaction == "app"
                        else f"https://{pub_host}/articulo/{int(rng.integers(1e6))}.html")
                base = {"uid": user.uid, "ua": ua, "ip": user.ip}

                def emit(t: int, url: str, referer: str | None, bytes_in: int, truth=None) -> None:
                    nonlocal order
                    rec = dict(base, ts=t, url=url, bytes_out=int(rng.integers(300, 900)), bytes_in=bytes_in,
                               dur=int(rng.integers(20, 400)))
                    if referer:
                        rec["referer"] = referer
                    pending.append((t, order, rec, truth))
                    order += 1

                emit(ts, page, None, int(rng.integers(15_000, 120_000)))
                if rng.random() < 0.4:
                    emit(ts + 150, f"https://www.google-analytics.com/__utm.gif?utmn={int(rng.integers(1e9))}",
                         page if interaction == "mobile_web" else None, 43)
                if rng.random() < 0.05:
                    d = cfg.dsps[int(rng.integers(len(cfg.dsps)))].domain
                    sid = user.sync_ids[d]
                    emit(ts + 200, f"https://sync.{d}/match?puid={sid}", None, 43)
                    emit(ts + 260, f"https://cm.{ADX_DOMAINS[cfg.adxs[0].adx_id]}/pixel/sync?dsp_uid={sid}", None, 43)

                adx = cfg.adxs[int(rng.choice(len(cfg.adxs), p=adx_w))]
                size = SIZES[user.device_type][int(rng.choice(3, p=SIZE_WEIGHTS))]
                t_imp = ts + 400 + int(rng.integers(0, 600))
                local = t_imp // 1000
                hour = (local // 3600) % 24
                core = CoreFeatures(
                    interaction=interaction, device_type=user.device_type, os=user.os, city=user.city,
                    tod_bucket=tod_bucket(hour), day_of_week=DAYS[(day + _weekday(cfg.start_ms)) % 7],
                    ad_size=size, publisher_iab=iab, adx_id=adx.adx_id, hour_of_day=hour,
                )
                law = cfg.price_law
                value = law.mean(core) * (math.exp(law.sigma * rng.standard_normal()) if law.sigma else 1.0)
                bids = []
                for d in cfg.dsps:
                    b = value * d.aggressiveness * (math.exp(d.noise * rng.standard_normal()) if d.noise else 1.0)
                    bids.append((d.domain, max(1, round(b * MICROS))))
                winner, charge = run_auction(bids)
                bid_w = dict(bids)[winner]
                auctions.append(AuctionLog(tuple(bids), winner, charge))
                imp_id = _rand_id(rng, 16)
                cid = f"c{int(rng.integers(1, 400)):04d}"
                token = encode_price(_fmt_cpm(charge), key, nonce=len(auctions)) if adx.policy == "encrypted" else None
                url = TEMPLATES[adx.adx_id].format(
                    dsp=winner, cid=cid, bidder=winner.split(".")[0], bid=_fmt_cpm(bid_w),
                    price=token or _fmt_cpm(charge), imp=imp_id, pub=pub_host, size=size,
                )
                truth = (user.uid, t_imp, adx.adx_id, winner, charge, bid_w, token, core)
                emit(t_imp, url, page if interaction == "mobile_web" else None, 43, truth)

    pending.sort(key=lambda x: (x[0], x[1]))
    charges = np.array([t[4] for _, _, _, t in pending if t is not None], dtype=float) / MICROS
    log_c = np.log(charges)
    binning = fit_binning(log_c, k=cfg.binning_k, allow_degenerate=True)
    ledger = SealedLedger(binning)
    records, impressions = [], []
    for _, _, rec, t in pending:
        records.append(rec)
        if t is None:
            continue
        uid, ts, adx_id, winner, charge, bid_w, token, core = t
        cls = binning.class_of(charge / MICROS)
        impressions.append(ImpressionTruth(uid, ts, adx_id, winner, charge, bid_w, cls, token, core))
        if token is not None:
            if token in ledger.entries:
                raise RuntimeError("token collision")
            ledger.entries[token] = (charge, cls)
    return SimResult(cfg, records, impressions, auctions, ledger)


def _propensity(rng: np.random.Generator, share: float) -> float:
    if share <= 0 or share >= 1:
        return float(share)
    return float(rng.beta(4 * share, 4 * (1 - share)))


def _weekday(start_ms: int) -> int:
    # 1970-01-01 was a Thursday
    return (start_ms // DAY_MS + 3) % 7


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def reference_tables(cfg: SimConfig) -> dict[str, list[tuple[str, str]]]:
    blacklist = [(ADX_DOMAINS[a.adx_id], "advertising") for a in cfg.adxs]
    blacklist += [(d.domain, "advertising") for d in cfg.dsps]
    blacklist += [("google-analytics.com", "analytics"), ("facebook.com", "social"),
                  ("akamaihd.net", "content")]
    return {
        "blacklist": sorted(set(blacklist)),
        "geo": sorted((cidr, city) for city, cidr in CITIES.items()),
        "iab_map": sorted(set(cfg.publishers)),
    }


def references(cfg: SimConfig) -> References:
    """In-memory reference tables matching what :func:`write_outputs` writes."""
    t = reference_tables(cfg)
    bl = Blacklist({d: parse_category(c) for d, c in t["blacklist"]})
    return References(bl, GeoTable(dict(t["geo"])), IabMap(dict(t["iab_map"])))


def write_outputs(result: SimResult, out_dir: str | Path) -> dict[str, Path]:
    """Write the weblog, sealed ledger, ground-truth report and reference tables."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / fn for name, fn in (
        ("weblog", "weblog.jsonl"), ("ledger", "sealed_ledger.json"), ("campaigns", "campaign_report.jsonl"),
        ("auctions", "auctions.jsonl"), ("blacklist", "blacklist.csv"), ("geo", "geo.csv"),
        ("iab_map", "iab_map.csv"))}
    with paths["weblog"].open("w", encoding="utf-8") as fh:
        for r in result.records:
            fh.write(_dumps(r) + "\n")
    paths["ledger"].write_text(_dumps(result.ledger.to_dict()) + "\n")
    with paths["campaigns"].open("w", encoding="utf-8") as fh:
        for imp in result.impressions:
            fh.write(_dumps({"features": imp.features.to_dict(),
                             "price": {"type": "cleartext", "cpm": _fmt_cpm(imp.charge_micros),
                                       "currency": "USD"}}) + "\n")
    with paths["auctions"].open("w", encoding="utf-8") as fh:
        for a in result.auctions:
            fh.write(_dumps({"bids": [list(b) for b in a.bids], "winner": a.winner,
                             "charge_micros": a.charge_micros}) + "\n")
    tables = reference_tables(result.config)
    for name, header in (("blacklist", ("domain", "category")), ("geo", ("cidr", "city")),
                         ("iab_map", ("domain", "iab"))):
        with paths[name].open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(tables[name])
    return paths
