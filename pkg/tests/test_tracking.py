import math
import random
from datetime import timedelta

import pytest
from hypothesis import given, strategies as st

from dyncomm.consensus import StepCommunity
from dyncomm.events import EntityRef
from dyncomm.network import Window
from dyncomm.tracking import (
    EventType,
    Timeline,
    TimelineSet,
    TrackingParams,
    advance_step,
    ewma,
    extract_persistent,
    representativeness,
    timeline_similarity,
    track,
)

from helpers import T0, ev


def refs(names):
    return frozenset(EntityRef.account(str(n)) for n in names)


def comm(step, idx, names):
    return StepCommunity(step, f"t{step}c{idx}", refs(names))


def timeline_of(*histories):
    """Timeline whose observations are given oldest first."""
    tl = Timeline("D1")
    for step, names in enumerate(histories):
        tl.observations.append((step, comm(step, 0, names)))
    return tl


def test_representativeness_cases():
    assert representativeness("abcd", "abcd") == 1.0
    assert representativeness("ab", "cd") == 0.0
    c = set("abcd")
    d = set("abxyzuvw")
    assert representativeness(c, d) == pytest.approx(math.sqrt(0.5 * 0.25), abs=1e-12)
    assert representativeness(c, d) == pytest.approx(0.35355, abs=1e-5)
    with pytest.raises(ValueError):
        representativeness(set(), {"a"})


@given(st.sets(st.integers(0, 15), min_size=1), st.sets(st.integers(0, 15), min_size=1))
def test_representativeness_properties(c, d):
    r = representativeness(c, d)
    assert r == representativeness(d, c)
    assert 0.0 <= r <= 1.0
    assert r >= len(c & d) / max(len(c), len(d)) - 1e-12
    assert (r == 1.0) == (c == d)


def test_ewma_hand_values():
    assert ewma([0.2], 0.5) == 0.2
    assert ewma([0.4, 0.1], 0.5) == pytest.approx(0.3, abs=1e-12)
    assert ewma([0.0, 0.0, 0.0], 0.5) == 0.0
    with pytest.raises(ValueError):
        ewma([], 0.5)


def test_timeline_similarity_composite():
    c = set("abcdefghij")
    newest = set("abcd") | set("KLMNOPQRSTUVWXYZ"[:6])  # overlap 4, sizes 10/10 -> 0.4
    oldest = set("a") | set("KLMNOPQRS")  # overlap 1, sizes 10/10 -> 0.1
    tl = timeline_of(oldest, newest)
    assert representativeness(c, newest) == pytest.approx(0.4)
    assert representativeness(c, oldest) == pytest.approx(0.1)
    sim = timeline_similarity(refs(c), tl, TrackingParams(alpha=0.5))
    assert sim == pytest.approx(0.3, abs=1e-12)
    assert sim >= TrackingParams().match_threshold


def test_threshold_inclusive_at_exactly_quarter():
    tl = timeline_of("abcd")
    new = comm(1, 0, "awxy")  # |C|=|D|=4, overlap 1 -> exactly 0.25
    assert timeline_similarity(new, tl) == 0.25
    state = TimelineSet([tl], 1)
    out = advance_step(state, [new])
    assert out.get("D1").events[-1].type is EventType.CONTINUATION


def test_empty_timeline_similarity_error():
    with pytest.raises(ValueError):
        timeline_similarity({"a"}, Timeline("x"))


def test_cold_start_births():
    out = advance_step(TimelineSet(), [comm(0, 0, "ab"), comm(0, 1, "cd")])
    assert len(out.timelines) == 2
    assert all(tl.events[0].type is EventType.BIRTH for tl in out.timelines)


def test_merge_event():
    state = track([[comm(0, 0, "abcd"), comm(0, 1, "efgh")]])
    out = advance_step(state, [comm(1, 0, "abcdefgh")])
    merges = [e for tl in out.timelines for e in tl.events if e.type is EventType.MERGE]
    assert len(merges) == 1
    survivor = [tl for tl in out.open_timelines()]
    assert len(survivor) == 1
    assert len(survivor[0].observations) == 2
    closed = [tl for tl in out.timelines if not tl.is_open]
    assert closed[0].closed_into == survivor[0].id and closed[0].closed_at == 1
    # absorbed history is available as a candidate
    assert refs("efgh") in survivor[0].history()


def test_split_event():
    state = track([[comm(0, 0, "abcdefgh")]])
    big = comm(1, 0, "abcdef")   # sqrt(6/6 * 6/8) ~ 0.87
    small = comm(1, 1, "gh")     # sqrt(2/2 * 2/8) = 0.5
    out = advance_step(state, [big, small])
    d1 = out.get("D1")
    assert d1.observation_at(1) == big
    (child,) = [tl for tl in out.timelines if tl.id != "D1"]
    assert child.events[0].type is EventType.SPLIT
    assert child.events[0].related == ("D1",)


def test_split_tie_falls_back_to_member_order():
    state = track([[comm(0, 0, "abcdefgh")]])
    a, b = comm(1, 0, "abcd"), comm(1, 1, "efgh")
    out = advance_step(state, [a, b])
    # equal similarity and size: lexicographic member order decides
    assert out.get("D1").observation_at(1) == a


def test_merge_precedence_over_split():
    state = track([[comm(0, 0, "abcd"), comm(0, 1, "efgh")]])
    merged = comm(1, 0, "abcdefgh")
    side = comm(1, 1, "abcdz")  # D1 also matches this one, more strongly
    out = advance_step(state, [merged, side])
    merge_events = [e for tl in out.timelines for e in tl.events if e.type is EventType.MERGE]
    assert len(merge_events) == 1
    split = [tl for tl in out.timelines if tl.events[0].type is EventType.SPLIT]
    assert [tl.observations[0][1] for tl in split] == [side]


def test_unmatched_timeline_absent_and_open():
    state = track([[comm(0, 0, "abcd")]])
    out = advance_step(state, [comm(1, 0, "wxyz")])
    d1 = out.get("D1")
    assert d1.events[-1].type is EventType.ABSENT and d1.is_open


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        advance_step(TimelineSet(), [comm(0, 0, "ab"), comm(0, 0, "cd")])


def test_step_must_increase():
    state = track([[comm(0, 0, "ab")], [comm(1, 0, "ab")]])
    with pytest.raises(ValueError):
        advance_step(state, [comm(1, 1, "ab")], step=1)


def test_advance_does_not_mutate_input():
    state = track([[comm(0, 0, "abcd")]])
    advance_step(state, [comm(1, 0, "abcd")])
    assert len(state.get("D1").observations) == 1


@given(st.integers(0, 10_000))
def test_partition_property_and_determinism(seed):
    rng = random.Random(seed)
    pool = "abcdefghijklmnop"
    steps = []
    for t in range(5):
        k = rng.randint(0, 4)
        steps.append([comm(t, i, rng.sample(pool, rng.randint(2, 6))) for i in range(k)])
    a = track(steps)
    b = track(steps)
    placed = [(s, c.id) for tl in a.timelines for s, c in tl.observations]
    assert sorted(placed) == sorted((c.step, c.id) for cs in steps for c in cs)
    assert len(set(placed)) == len(placed)
    assert [(tl.id, tl.events) for tl in a.timelines] == [(tl.id, tl.events) for tl in b.timelines]
    for tl in a.timelines:
        obs_steps = [s for s, _ in tl.observations]
        assert obs_steps == sorted(set(obs_steps))
        assert tl.events[0].type in (EventType.BIRTH, EventType.SPLIT)


@given(st.lists(st.sets(st.integers(0, 12), min_size=1), min_size=1, max_size=8),
       st.sets(st.integers(0, 12), min_size=1))
def test_alpha_one_front_matching(history, c):
    tl = timeline_of(*history)
    got = timeline_similarity(refs(c), tl, TrackingParams(alpha=1.0))
    assert got == pytest.approx(representativeness(c, history[-1]), abs=1e-12)


# persistence ------------------------------------------------------------------

WINDOWS = [Window(i, T0 + timedelta(days=7 * i), T0 + timedelta(days=7 * i + 14)) for i in range(3)]


def _tweets(author, days):
    return [ev(f"{author}-{d}", author, d * 24 * 60 + 60) for d in days]


def test_persistent_when_members_always_active():
    state = track([[comm(t, 0, ["p1", "p2"])] for t in range(3)])
    log = _tweets("p1", [1, 8, 15])
    assert [tl.id for tl in extract_persistent(state, log, WINDOWS)] == ["D1"]


def test_not_persistent_with_silent_window():
    state = track([[comm(t, 0, ["p1", "p2"])] for t in range(3)])
    log = _tweets("p1", [1, 2])  # nothing after day 14
    assert extract_persistent(state, log, WINDOWS) == []


def test_persistent_despite_unmatched_step():
    state = track([[comm(0, 0, ["p1", "p2"])], [comm(1, 0, ["q1", "q2"])], [comm(2, 0, ["p1", "p2"])]])
    d1 = state.get("D1")
    assert d1.observation_at(1) is None
    assert any(e.type is EventType.ABSENT and e.step == 1 for e in d1.events)
    log = _tweets("p2", [10, 20])  # active in windows 0..2 via day 10 and 20
    assert "D1" in [tl.id for tl in extract_persistent(state, log, WINDOWS)]


def test_params_validation():
    with pytest.raises(ValueError):
        TrackingParams(alpha=0)
    with pytest.raises(ValueError):
        TrackingParams(match_threshold=1.5)
