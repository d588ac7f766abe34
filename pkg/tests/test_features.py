import ipaddress
import random
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from rtbcost.features.cookiesync import detect_cookie_sync, looks_like_id
from rtbcost.features.geo import GeoTable, geo_lookup
from rtbcost.features.interests import EmptyProfile, IabMap, infer_interests
from rtbcost.features.useragent import DESKTOP, parse_user_agent
from rtbcost.features.vector import (
    CoreFeatures,
    MissingGeo,
    References,
    UserAggregates,
    UserContext,
    build_features,
    project,
    tod_bucket,
)
from rtbcost.ingest import HttpRequestRecord, partition_by_user
from rtbcost.nurl import detect
from rtbcost.pipeline import labelled_notifications

CORPUS = Path(__file__).parent / "data" / "ua_corpus.tsv"


def _corpus():
    for line in CORPUS.read_text().splitlines():
        if line and not line.startswith("#"):
            ua, dev, os_, inter = line.split("\t")
            yield pytest.param(ua, (dev, os_, inter), id=ua[:40])


@pytest.mark.parametrize("ua,expected", list(_corpus()))
def test_user_agent_corpus(ua, expected):
    p = parse_user_agent(ua)
    assert (p.device_type, p.os, p.interaction) == expected


def test_corpus_size():
    assert len(list(_corpus())) == 50


def test_empty_ua():
    assert parse_user_agent("") == DESKTOP


@given(st.text(max_size=200))
def test_app_only_on_mobile(ua):
    p = parse_user_agent(ua)
    assert p.interaction != "app" or p.device_type in ("smartphone", "tablet")


def _linear_geo(ip, entries):
    addr = ipaddress.ip_address(ip)
    best = None
    for cidr, city in entries.items():
        net = ipaddress.ip_network(cidr)
        if addr in net and (best is None or net.prefixlen > best[0]):
            best = (net.prefixlen, city)
    return best[1] if best else None


def test_geo_examples():
    t = GeoTable({"10.0.0.0/8": "Madrid", "10.1.0.0/16": "Barcelona"})
    assert geo_lookup("10.0.0.5", t) == "Madrid"
    assert geo_lookup("10.1.0.5", t) == "Barcelona"
    assert geo_lookup("192.168.0.1", t) is None
    assert geo_lookup("not-an-ip", t) is None
    assert geo_lookup(None, t) is None


def test_geo_ipv6():
    t = GeoTable({"2001:db8::/32": "Valencia", "2001:db8:1::/48": "Seville"})
    assert t.lookup("2001:db8:1::7") == "Seville"
    assert t.lookup("2001:db8:2::7") == "Valencia"


def test_geo_matches_linear_scan():
    rng = random.Random(3)
    entries = {}
    for _ in range(200):
        plen = rng.choice([8, 12, 16, 20, 24, 28])
        net = ipaddress.ip_network(f"{rng.choice([10, 81, 83])}.{rng.randrange(4)}.{rng.randrange(256)}.0/{plen}",
                                   strict=False)
        entries[str(net)] = f"c{rng.randrange(9)}"
    t = GeoTable(entries)
    for _ in range(2000):
        ip = f"{rng.choice([10, 81, 83, 90])}.{rng.randrange(4)}.{rng.randrange(256)}.{rng.randrange(256)}"
        assert t.lookup(ip) == _linear_geo(ip, entries)


def test_geo_csv(tmp_path):
    p = tmp_path / "geo.csv"
    p.write_text("cidr,city\n81.32.0.0/16,Madrid\n")
    assert GeoTable.from_csv(p).lookup("81.32.9.9") == "Madrid"


IAB = IabMap({"news.com": "IAB12", "sport.com": "IAB17", "cars.es": "IAB2"})


def test_interest_ratio():
    prof = infer_interests(["news.com"] * 3 + ["www.sport.com", "unmapped.org"], IAB)
    assert prof.weights == {"IAB12": 0.75, "IAB17": 0.25}
    assert prof.top() == "IAB12"


def test_interest_empty():
    with pytest.raises(EmptyProfile):
        infer_interests(["a.org", "b.org"], IAB)


def test_interest_counting_oracle():
    rng = random.Random(5)
    hosts = [rng.choice(["news.com", "sport.com", "cars.es", "m.cars.es", "x.org"]) for _ in range(10_000)]
    counts = Counter({"news.com": 0, "sport.com": 0, "cars.es": 0})
    for h in hosts:
        if h != "x.org":
            counts[h.removeprefix("m.")] += 1
    total = sum(counts.values())
    w = infer_interests(hosts, IAB).weights
    assert w["IAB12"] == counts["news.com"] / total
    assert w["IAB2"] == counts["cars.es"] / total
    assert abs(sum(w.values()) - 1) < 1e-9


def test_bad_iab_code():
    with pytest.raises(ValueError):
        IabMap({"a.com": "IAB99"})


def _r(url, ts=0):
    from urllib.parse import urlsplit
    return HttpRequestRecord(ts, "u", url, urlsplit(url).hostname)


SYNC_ID = "a8F3kQ9zLm2Xp7Rt4Vw1"


def test_cookie_sync_two_domains():
    stream = [_r(f"http://px.a.com/s?uid={SYNC_ID}"), _r(f"http://px.b.com/s?partner={SYNC_ID}")]
    assert detect_cookie_sync(stream) == 1


def test_cookie_sync_single_domain():
    stream = [_r(f"http://px.a.com/s?uid={SYNC_ID}"), _r(f"http://cdn.a.com/s?uid={SYNC_ID}")]
    assert detect_cookie_sync(stream) == 0


def test_cookie_sync_planted():
    rng = random.Random(9)
    alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    k = 17
    stream = []
    for _ in range(k):
        tok = "".join(rng.choice(alphabet) for _ in range(24)) + "7q"
        doms = rng.sample(["a.com", "b.net", "c.org", "d.es"], rng.randint(2, 4))
        stream += [_r(f"http://sync.{d}/p?id={tok}") for d in doms]
    for i in range(50):
        stream.append(_r(f"http://site{i}.com/p?page=2&lang=es&q=zapatos"))
    rng.shuffle(stream)
    assert detect_cookie_sync(stream) == k


def test_id_heuristic():
    assert looks_like_id(SYNC_ID)
    assert not looks_like_id("aaaaaaaaaaaaaaaaaaaa1")
    assert not looks_like_id("short1a")
    assert not looks_like_id("onlylettersbutlongenough")


@pytest.mark.parametrize("hour,bucket", [(0, "12am-9am"), (8, "12am-9am"), (9, "9am-6pm"),
                                         (17, "9am-6pm"), (18, "6pm-12am"), (23, "6pm-12am")])
def test_tod_bucket(hour, bucket):
    assert tod_bucket(hour) == bucket


def test_tuesday_morning(rules):
    ts = int(datetime(2016, 1, 5, 8, 10, tzinfo=timezone.utc).timestamp() * 1000)
    refs = References(geo=GeoTable({"81.32.0.0/16": "Madrid"}))
    r = HttpRequestRecord(ts, "u", "http://x.mopub.com/imp?charge_price=1.0&ad_size=320x50", "x.mopub.com",
                          client_ip="81.32.1.1")
    ctx = UserContext(refs)
    ctx.observe(r)
    f = build_features(detect(r, rules), ctx, r)
    assert (f.tod_bucket, f.is_weekend, f.day_of_week, f.city) == ("12am-9am", False, "tue", "Madrid")
    assert project(f) == project(f)
    core = project(f)
    assert core.ad_size == "320x50" and core.publisher_iab == "other"


def test_missing_geo(rules):
    r = HttpRequestRecord(0, "u", "http://x.mopub.com/imp?charge_price=1.0", "x.mopub.com")
    ctx = UserContext(References())
    ctx.observe(r)
    n = detect(r, rules)
    assert build_features(n, ctx, r).city is None
    with pytest.raises(MissingGeo):
        build_features(n, ctx, r, require_geo=True)


def test_aggregates_merge():
    a = UserAggregates(1, 2, 3, 100, 4, 40)
    b = UserAggregates(0, 1, 1, 50, 1, 10)
    c = UserAggregates(2, 0, 0, 0, 2, 6)
    assert a.merge(b).merge(c) == a.merge(b.merge(c))
    assert a.avg_bytes_per_request == 25.0 and a.avg_duration_per_request == 10.0


def test_core_features_from_dict_is_closed():
    d = {"interaction": "app", "device_type": "smartphone", "os": "ios", "city": "Madrid",
         "tod_bucket": "9am-6pm", "day_of_week": "mon", "ad_size": "320x50", "publisher_iab": "IAB1",
         "adx_id": "mopub", "hour_of_day": 10}
    assert CoreFeatures.from_dict(d).to_dict() == d
    with pytest.raises(ValueError):
        CoreFeatures.from_dict({**d, "user_id": "x"})
    with pytest.raises(ValueError):
        CoreFeatures.from_dict({**d, "hour_of_day": 24})


def test_features_match_simulator_truth(small_sim, small_records, small_refs, rules):
    truth = {(t.user_id, t.timestamp): t.features for t in small_sim.impressions}
    seen = 0
    for n, core in labelled_notifications(small_records, small_refs, rules):
        assert core == truth[(n.user_id, n.timestamp)]
        seen += 1
    assert seen == len(truth)


def test_no_lookahead(small_records, small_refs, rules):
    users = partition_by_user(small_records)
    uid = sorted(users)[0]
    recs = users[uid]
    full = UserContext(small_refs)
    checked = 0
    for i, rec in enumerate(recs):
        n = detect(rec, rules)
        full.observe(rec, notification=n)
        if n is None or checked >= 25:
            continue
        prefix = UserContext.from_records(recs[:i + 1], small_refs, rules)
        assert build_features(n, prefix, rec) == build_features(n, full, rec)
        checked += 1
    assert checked > 0
