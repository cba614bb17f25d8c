import json
import random
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from dyncomm.events import (
    EntityKind,
    EntityRef,
    EventParseError,
    Resolver,
    StatsReport,
    classify_url,
    dataset_stats,
    load_resolver,
    parse_events,
)

from helpers import URL_TABLE, ev, random_log


def line(**kw):
    rec = {"event_id": "e1", "author": "a1", "timestamp": "2012-06-01T10:00:00Z",
           "mentioned": [], "reshare_of": None, "urls": []}
    rec.update(kw)
    return json.dumps(rec)


def test_parse_single_record():
    log = parse_events((line(mentioned=["a2"]) + "\n").encode())
    assert len(log) == 1
    assert log[0].author == "a1"
    assert log[0].mentioned == ("a2",)


def test_parse_bad_timestamp_names_line_and_field():
    text = line() + "\n" + line(event_id="e2", timestamp="not-a-date") + "\n"
    with pytest.raises(EventParseError) as err:
        parse_events(text)
    assert err.value.line == 2
    assert err.value.field == "timestamp"


def test_parse_duplicate_event_id():
    with pytest.raises(EventParseError, match="duplicate"):
        parse_events(line() + "\n" + line() + "\n")


@pytest.mark.parametrize("bad, field", [
    ({"author": ""}, "author"),
    ({"event_id": None}, "event_id"),
    ({"mentioned": ["a2", "a2"]}, "mentioned"),
    ({"urls": "http://x.org"}, "urls"),
    ({"reshare_of": 3}, "reshare_of"),
])
def test_parse_rejects_malformed_fields(bad, field):
    with pytest.raises(EventParseError) as err:
        parse_events(line(**bad))
    assert err.value.field == field


def test_parse_sorts_by_timestamp_stably():
    rows = [
        line(event_id="x", timestamp="2012-06-03T00:00:00Z"),
        line(event_id="y", timestamp="2012-06-01T00:00:00Z"),
        line(event_id="z", timestamp="2012-06-03T00:00:00Z"),
    ]
    log = parse_events("\n".join(rows))
    # sort oracle: stable sort of (timestamp, input position)
    expected = [eid for _, _, eid in sorted(
        [("2012-06-03", 0, "x"), ("2012-06-01", 1, "y"), ("2012-06-03", 2, "z")])]
    assert [r.event_id for r in log] == expected == ["y", "x", "z"]


def test_parse_accepts_offsets_and_normalizes_to_utc():
    (r,) = parse_events(line(timestamp="2012-06-01T12:00:00+02:00"))
    assert r.timestamp.hour == 10 and r.timestamp.utcoffset().total_seconds() == 0


def test_classify_resolved_video():
    ref = classify_url("https://www.youtube.com/watch?v=XXXXXXXX", Resolver({"XXXXXXXX": "chanC"}))
    assert ref == EntityRef(EntityKind.VIDEO_CHANNEL, "chanC")
    assert ref.resolved


def test_classify_unresolved_video():
    ref = classify_url("https://youtu.be/YYYYYYYY", Resolver())
    assert ref == EntityRef(EntityKind.VIDEO_CHANNEL, "video:YYYYYYYY")
    assert not ref.resolved


def test_classify_website_registrable_domain():
    assert classify_url("http://www.example-party.org/news/item1") == EntityRef.website("example-party.org")
    assert classify_url("https://news.BBC.co.uk/x?y=1") == EntityRef.website("bbc.co.uk")


@pytest.mark.parametrize("url, expected", [
    ("https://www.facebook.com/profile.php?id=12345", EntityRef(EntityKind.SOCIAL_PROFILE, "12345")),
    ("https://m.facebook.com/SomePage/posts/1", EntityRef(EntityKind.SOCIAL_PROFILE, "somepage")),
    ("https://facebook.com/pages/Name/998877", EntityRef(EntityKind.SOCIAL_PROFILE, "998877")),
    ("https://www.facebook.com/groups/MyGroup/", EntityRef(EntityKind.SOCIAL_PROFILE, "groups/mygroup")),
    ("https://www.facebook.com/sharer.php?u=x", EntityRef.website("facebook.com")),
    ("https://twitter.com/someone/status/1/photo/1", EntityRef.account("someone")),
    ("https://twitter.com/search?q=x", EntityRef.website("twitter.com")),
    ("https://www.youtube.com/channel/UCabc", EntityRef(EntityKind.VIDEO_CHANNEL, "UCabc")),
    ("https://www.youtube.com/user/SomeUser", EntityRef(EntityKind.VIDEO_CHANNEL, "user:someuser")),
    ("https://www.youtube.com/", EntityRef.website("youtube.com")),
    ("http://192.168.1.1/x", EntityRef.website("192.168.1.1")),
])
def test_classify_rules(url, expected):
    assert classify_url(url) == expected


def test_classify_unparseable_host():
    assert classify_url("http:///nohost") is None
    assert classify_url("http://[bad") is None


def test_fixture_url_table_matches_classifier():
    for url, ref in URL_TABLE.items():
        assert classify_url(url) == ref


def test_custom_rule_first_match_wins():
    from dyncomm.events import DEFAULT_RULES, UrlRule

    rule = UrlRule("blog", frozenset({"blog.example.org"}),
                   lambda parts, q, r: EntityRef(EntityKind.SOCIAL_PROFILE, parts[0]) if parts else None)
    resolver = Resolver({}, (rule,) + DEFAULT_RULES)
    assert classify_url("http://blog.example.org/alice", resolver) == EntityRef(EntityKind.SOCIAL_PROFILE, "alice")
    assert classify_url("http://blog.example.org/", resolver) == EntityRef.website("example.org")


def test_load_resolver(tmp_path):
    p = tmp_path / "res.tsv"
    p.write_text("vid1\tchanA\n\nvid2\tchanB\n")
    assert load_resolver(p).video_to_channel == {"vid1": "chanA", "vid2": "chanB"}
    p.write_text("only-one-column\n")
    with pytest.raises(ValueError, match="line 1"):
        load_resolver(p)


hosts = st.from_regex(r"[A-Za-z][A-Za-z0-9-]{0,10}(\.[A-Za-z][A-Za-z0-9-]{0,8}){1,3}", fullmatch=True)
paths = st.from_regex(r"(/[A-Za-z0-9_.-]{0,8}){0,3}", fullmatch=True)


@given(st.sampled_from(["http", "https"]), hosts, paths)
def test_classify_idempotent_and_website_ids_clean(scheme, host, path):
    ref = classify_url(f"{scheme}://{host}{path}")
    assert ref is not None
    again = classify_url(f"{scheme}://{host}{path}")
    assert again == ref
    if ref.kind is EntityKind.WEBSITE:
        assert "/" not in ref.id and ":" not in ref.id and ref.id == ref.id.lower()
        # canonical form classifies to itself
        assert classify_url(f"http://{ref.id}/") == ref


def test_stats_empty():
    assert dataset_stats([]) == StatsReport()


def test_stats_hand_count():
    log = [
        ev("e1", "a1", 0, mentioned=["a2", "a3"], urls=["http://x.org/1", "https://youtu.be/abcdefgh"]),
        ev("e2", "a2", 1, reshare="a1", urls=["http://y.org"]),
        ev("e3", "a3", 2, urls=["http://z.org/q"]),
    ]
    assert dataset_stats(log).as_tuple() == (3, 2, 1, 4, 1, 0)


def test_stats_render_row_shape():
    row = StatsReport(1517339, 539181, 162042, 972444, 71049, 23007).render("English language")
    assert row == "English language | 1,517,339 | 539,181 | 162,042 | 972,444 | 71,049 | 23,007"


@given(st.integers(0, 2**32), st.integers(0, 2**32))
def test_stats_additive(seed_a, seed_b):
    a = random_log(random.Random(seed_a), max_events=15)
    b = [replace(r, event_id=r.event_id + "b") for r in random_log(random.Random(seed_b), max_events=15)]
    assert dataset_stats(a + b) == dataset_stats(a) + dataset_stats(b)
