import gzip
import json

import pytest
from hypothesis import given, strategies as st

from rtbcost.ingest import (
    Blacklist,
    BlacklistError,
    CategoryCounts,
    DomainCategory,
    IngestStats,
    MalformedRecord,
    iter_records,
    parse_category,
    parse_record,
    parse_timestamp,
    partition_by_user,
    read_log,
    record_to_mapping,
)

BL = Blacklist({
    "doubleclick.net": "Advertising",
    "ads.example.com": "Advertising",
    "example.com": "ThirdPartyContent",
    "google-analytics.com": "Analytics",
    "facebook.com": "Social",
})


def _oracle(host, entries):
    # brute force: every registered suffix that matches, keep the longest
    best = None
    for dom, cat in entries.items():
        if host == dom or host.endswith("." + dom):
            if best is None or len(dom) > len(best[0]):
                best = (dom, cat)
    return best[1] if best else DomainCategory.REST


@pytest.mark.parametrize("host,expected", [
    ("ad.doubleclick.net", DomainCategory.ADVERTISING),
    ("doubleclick.net", DomainCategory.ADVERTISING),
    ("notdoubleclick.net", DomainCategory.REST),
    ("x.ads.example.com", DomainCategory.ADVERTISING),
    ("www.example.com", DomainCategory.THIRD_PARTY_CONTENT),
    ("www.google-analytics.com", DomainCategory.ANALYTICS),
    ("elpais.com", DomainCategory.REST),
])
def test_classify_longest_suffix(host, expected):
    assert BL.classify(host) == expected


_labels = st.sampled_from(["a", "b", "ads", "cdn", "x1"])
_hosts = st.lists(_labels, min_size=1, max_size=4).map(".".join)


@given(entries=st.dictionaries(_hosts, st.sampled_from(list(DomainCategory)), max_size=8), host=_hosts)
def test_classify_matches_bruteforce(entries, host):
    assert Blacklist(entries).classify(host) == _oracle(host, entries)


def test_blacklist_csv(tmp_path):
    p = tmp_path / "bl.csv"
    p.write_text("domain,category\nmopub.com,advertising\n# comment\nfoo.com,Content\n")
    bl = Blacklist.from_csv(p)
    assert len(bl) == 2
    assert bl.classify("cpp.imp.mpx.mopub.com") == DomainCategory.ADVERTISING
    assert bl.classify("a.foo.com") == DomainCategory.THIRD_PARTY_CONTENT


@pytest.mark.parametrize("body", ["x.com,Bogus\n", "x.com,Advertising\nx.com,Social\n", "x.com\n"])
def test_blacklist_rejects_bad_rows(tmp_path, body):
    p = tmp_path / "bl.csv"
    p.write_text(body)
    with pytest.raises(BlacklistError):
        Blacklist.from_csv(p)


def test_parse_category_aliases():
    assert parse_category("Third Party Content") == DomainCategory.THIRD_PARTY_CONTENT
    with pytest.raises(BlacklistError):
        parse_category("weird")


def test_timestamps():
    assert parse_timestamp(1451865600000) == 1451865600000
    assert parse_timestamp("2016-01-04T00:00:00Z") == 1451865600000
    assert parse_timestamp("2016-01-04T01:00:00+01:00") == 1451865600000
    for bad in ("2016-01-04T00:00:00", "yesterday", True, None):
        with pytest.raises(MalformedRecord):
            parse_timestamp(bad)


def test_parse_json_line():
    r = parse_record('{"ts": 5, "uid": "u1", "url": "http://a.b.com/x?y=1", "ua": "UA", "bytes_in": 10}')
    assert (r.timestamp, r.user_id, r.host, r.bytes_in) == (5, "u1", "a.b.com", 10)


def test_negative_optional_field_is_dropped():
    stats = IngestStats()
    r = parse_record('{"ts": 5, "uid": "u", "url": "http://a.com/", "bytes_in": -3}', stats=stats)
    assert r.bytes_in == 0 and stats.dropped_fields == 1


@pytest.mark.parametrize("line", [
    "not json",
    "[1, 2]",
    '{"uid": "u", "url": "http://a.com/"}',
    '{"ts": 1, "uid": "", "url": "http://a.com/"}',
    '{"ts": 1, "uid": "u", "url": "/relative"}',
])
def test_malformed_lines(line):
    with pytest.raises(MalformedRecord):
        parse_record(line)


def test_stream_counts_malformed_and_window():
    lines = [
        '{"ts": 1, "uid": "u", "url": "http://a.com/"}',
        "garbage",
        "",
        '{"ts": 50, "uid": "u", "url": "http://a.com/"}',
        '{"ts": 10, "uid": "v", "url": "http://a.com/"}',
    ]
    stats = IngestStats()
    got = list(iter_records(lines, stats=stats, window=(0, 20)))
    assert [r.timestamp for r in got] == [1, 10]
    assert (stats.lines, stats.parsed, stats.malformed, stats.out_of_window) == (4, 2, 1, 1)
    assert stats.skipped == 2


def test_csv_and_gzip_readers(tmp_path):
    csv_path = tmp_path / "log.csv"
    csv_path.write_text("ts,uid,url,ua\n3,u,http://a.com/p,UA\n1,u,http://b.com/,UA\nbad,row\n")
    stats = IngestStats()
    recs = list(read_log(csv_path, stats))
    assert [r.host for r in recs] == ["a.com", "b.com"]
    assert stats.malformed == 1

    gz = tmp_path / "log.jsonl.gz"
    with gzip.open(gz, "wt") as fh:
        for r in recs:
            fh.write(json.dumps(record_to_mapping(r)) + "\n")
    assert list(read_log(gz)) == recs


def test_partition_sorted_and_stable():
    lines = [json.dumps({"ts": t, "uid": u, "url": f"http://h{i}.com/"})
             for i, (u, t) in enumerate([("b", 3), ("a", 2), ("b", 1), ("b", 3)])]
    groups = partition_by_user(iter_records(lines))
    assert sorted(groups) == ["a", "b"]
    assert [r.host for r in groups["b"]] == ["h2.com", "h0.com", "h3.com"]


def test_category_counts_merge_is_associative():
    a, b, c = CategoryCounts(), CategoryCounts(), CategoryCounts()
    a.add(DomainCategory.REST, 2)
    b.add(DomainCategory.REST)
    b.add(DomainCategory.SOCIAL)
    c.add(DomainCategory.ADVERTISING, 4)
    assert a.merge(b).merge(c).counts == a.merge(b.merge(c)).counts
