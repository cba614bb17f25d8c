"""Matching step communities into dynamic community timelines.

Every open timeline is compared with each new step community against *all*
of its historical observations, not just the most recent one. Individual
similarities are combined newest-first with exponentially decaying weights,
and a match needs an overall similarity of at least ``match_threshold``.
"""

from __future__ import annotations

import copy
import enum
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .consensus import StepCommunity
from .events import EntityKind, EventRecord
from .network import Window


@dataclass(frozen=True)
class TrackingParams:
    alpha: float = 0.5
    match_threshold: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.match_threshold <= 1.0:
            raise ValueError("match_threshold must lie in [0, 1]")


class EventType(str, enum.Enum):
    BIRTH = "Birth"
    CONTINUATION = "Continuation"
    MERGE = "Merge"
    SPLIT = "Split"
    ABSENT = "Absent"


@dataclass(frozen=True)
class LifecycleEvent:
    step: int
    type: EventType
    related: tuple[str, ...] = ()
    community_id: str | None = None


@dataclass
class Timeline:
    id: str
    observations: list[tuple[int, StepCommunity]] = field(default_factory=list)
    events: list[LifecycleEvent] = field(default_factory=list)
    # histories absorbed from timelines merged into this one, used as match candidates
    inherited: list[tuple[int, frozenset]] = field(default_factory=list)
    closed_into: str | None = None
    closed_at: int | None = None

    @property
    def is_open(self) -> bool:
        return self.closed_into is None

    def history(self) -> list[frozenset]:
        """Candidate member sets, newest first (own observations before inherited ones)."""
        rows = [(step, 0, i, c.members) for i, (step, c) in enumerate(self.observations)]
        rows += [(step, 1, i, m) for i, (step, m) in enumerate(self.inherited)]
        rows.sort(key=lambda r: (-r[0], r[1], r[2]))
        return [r[3] for r in rows]

    def full_history(self) -> list[tuple[int, frozenset]]:
        return [(s, c.members) for s, c in self.observations] + list(self.inherited)

    def members(self) -> frozenset:
        """Union of every member ever observed, including merged-in histories."""
        out: set = set()
        for _, m in self.full_history():
            out |= m
        return frozenset(out)

    def observation_at(self, step: int) -> StepCommunity | None:
        for s, c in self.observations:
            if s == step:
                return c
        return None


@dataclass
class TimelineSet:
    timelines: list[Timeline] = field(default_factory=list)
    step_count: int = 0

    def get(self, timeline_id: str) -> Timeline:
        for tl in self.timelines:
            if tl.id == timeline_id:
                return tl
        raise KeyError(f"unknown timeline {timeline_id!r}")

    def open_timelines(self) -> list[Timeline]:
        return [tl for tl in self.timelines if tl.is_open]

    def communities_at(self, step: int) -> list[StepCommunity]:
        return [c for tl in self.timelines for s, c in tl.observations if s == step]


def representativeness(c: Iterable, d: Iterable) -> float:
    """Geometric mean of the two containment ratios of sets ``c`` and ``d``."""
    c, d = frozenset(c), frozenset(d)
    if not c or not d:
        raise ValueError("representativeness needs two nonempty sets")
    inter = len(c & d)
    return math.sqrt((inter / len(c)) * (inter / len(d)))


def ewma(similarities: Sequence[float], alpha: float) -> float:
    """Weighted mean with weights ``(1 - alpha) ** i``, newest value first."""
    if not similarities:
        raise ValueError("no similarities to average")
    weights = [(1.0 - alpha) ** i for i in range(len(similarities))]
    return sum(w * s for w, s in zip(weights, similarities)) / sum(weights)


def timeline_similarity(community, tl: Timeline, params: TrackingParams = TrackingParams()) -> float:
    members = community.members if isinstance(community, StepCommunity) else frozenset(community)
    history = tl.history()
    if not history:
        raise ValueError(f"timeline {tl.id} has no observations")
    return ewma([representativeness(members, h) for h in history], params.alpha)


def _split_order(sim: float, c: StepCommunity):
    return (-sim, -len(c.members), sorted(map(str, c.members)))


def advance_step(
    state: TimelineSet,
    step_communities: Sequence[StepCommunity],
    params: TrackingParams = TrackingParams(),
    step: int | None = None,
) -> TimelineSet:
    """Return a new TimelineSet with one more step matched in.

    Several timelines matching one community merge into the best-matching
    one. When a timeline matches several communities, the best match
    continues it and each other community starts a new timeline with a Split
    event. Merges take precedence: a timeline that could both merge and split
    joins the merge, and its other matches become split offspring.
    """
    ids = [c.id for c in step_communities]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate step community ids")
    steps = {c.step for c in step_communities}
    if step is None:
        step = steps.pop() if len(steps) == 1 else state.step_count
    if steps - {step}:
        raise ValueError("step communities belong to different steps")
    last = max((s for tl in state.timelines for s, _ in tl.observations), default=-1)
    if step <= last:
        raise ValueError(f"step {step} does not follow already-tracked step {last}")

    new = copy.deepcopy(state)
    new.step_count = max(state.step_count, step + 1)
    communities = sorted(step_communities, key=lambda c: c.id)
    open_tls = new.open_timelines()

    sims: dict[tuple[str, str], float] = {}
    by_comm: dict[str, list[Timeline]] = defaultdict(list)
    by_tl: dict[str, list[StepCommunity]] = defaultdict(list)
    for tl in open_tls:
        for c in communities:
            s = timeline_similarity(c, tl, params)
            if s >= params.match_threshold:
                sims[(tl.id, c.id)] = s
                by_comm[c.id].append(tl)
                by_tl[tl.id].append(c)

    merge_targets = {cid for cid, tls in by_comm.items() if len(tls) >= 2}

    # each matched timeline attaches to one community; merge communities first
    primary: dict[str, str] = {}
    for tl in open_tls:
        matched = by_tl.get(tl.id)
        if not matched:
            continue
        pool = [c for c in matched if c.id in merge_targets] or matched
        best = min(pool, key=lambda c: _split_order(sims[(tl.id, c.id)], c))
        primary[tl.id] = best.id

    attached: dict[str, list[Timeline]] = defaultdict(list)
    for tl in open_tls:
        if tl.id in primary:
            attached[primary[tl.id]].append(tl)

    counter = len(new.timelines)
    for c in communities:
        group = attached.get(c.id, [])
        if len(group) >= 2:
            order = {tl.id: i for i, tl in enumerate(open_tls)}
            group.sort(key=lambda tl: (-sims[(tl.id, c.id)], order[tl.id]))
            survivor, absorbed = group[0], group[1:]
            for tl in absorbed:
                survivor.inherited.extend(tl.full_history())
                tl.closed_into = survivor.id
                tl.closed_at = step
            survivor.observations.append((step, c))
            survivor.events.append(
                LifecycleEvent(step, EventType.MERGE, tuple(tl.id for tl in absorbed), c.id))
        elif len(group) == 1:
            group[0].observations.append((step, c))
            group[0].events.append(LifecycleEvent(step, EventType.CONTINUATION, (), c.id))
        else:
            counter += 1
            tl = Timeline(f"D{counter}")
            tl.observations.append((step, c))
            matched = by_comm.get(c.id)
            if matched:
                parent = min(matched, key=lambda t: -sims[(t.id, c.id)])
                tl.events.append(LifecycleEvent(step, EventType.SPLIT, (parent.id,), c.id))
            else:
                tl.events.append(LifecycleEvent(step, EventType.BIRTH, (), c.id))
            new.timelines.append(tl)

    for tl in open_tls:
        if tl.id not in primary:
            tl.events.append(LifecycleEvent(step, EventType.ABSENT))
    return new


def track(steps: Iterable[Sequence[StepCommunity]], params: TrackingParams = TrackingParams()) -> TimelineSet:
    state = TimelineSet()
    for t, communities in enumerate(steps):
        state = advance_step(state, communities, params, step=t)
    return state


def extract_persistent(state: TimelineSet, log: Sequence[EventRecord],
                       windows: Sequence[Window]) -> list[Timeline]:
    """Open timelines with at least one member account active in every window.

    Activity means authoring an event inside the window, so a timeline can be
    persistent while unmatched at some steps.
    """
    active = [set() for _ in windows]
    for r in log:
        for i, w in enumerate(windows):
            if w.contains(r.timestamp):
                active[i].add(r.author)
    out = []
    for tl in state.open_timelines():
        accounts = {m.id for m in tl.members() if getattr(m, "kind", None) is EntityKind.ACCOUNT}
        if windows and all(accounts & a for a in active):
            out.append(tl)
    return out
