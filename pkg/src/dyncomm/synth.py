"""Synthetic event logs with planted dynamic communities, and tracking scores.

A scenario runs over ``steps + 1`` weeks so that ``steps`` two-week windows
with a one-week stride fit exactly. Community membership is fixed within a
week and may change at week boundaries through churn or scripted
merge/split directives. The planted membership of step ``t`` is the state
during week ``t``.
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, fields
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .events import EntityKind, EntityRef, EventRecord
from .network import WindowSpec
from .tracking import EventType, TimelineSet


@dataclass(frozen=True)
class Directive:
    step: int
    type: EventType
    labels: tuple[int, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    communities: int = 3
    accounts_per_community: int = 8
    external_per_community: int = 3
    steps: int = 10
    churn_rate: float = 0.0
    intra_event_rate: float = 12.0
    inter_event_rate: float = 0.0
    url_event_rate: float = 6.0
    lifecycle_script: tuple[Directive, ...] = ()
    seed: int = 0
    start: date = date(2012, 6, 1)

    def validate(self) -> None:
        if self.communities < 1 or self.accounts_per_community < 2:
            raise ValueError("need at least one community of two or more accounts")
        if self.external_per_community < 0 or self.steps < 1:
            raise ValueError("external_per_community must be >= 0 and steps >= 1")
        if not 0.0 <= self.churn_rate <= 1.0:
            raise ValueError("churn_rate must lie in [0, 1]")
        for name in ("intra_event_rate", "inter_event_rate", "url_event_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def window_spec(self) -> WindowSpec:
        end = self.start + timedelta(weeks=self.steps + 1)
        return WindowSpec(self.start, end)


def parse_script(text: str) -> tuple[Directive, ...]:
    """Parse ``5:merge:0+1;8:split:2`` into directives."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        try:
            step, kind, labels = item.split(":")
            out.append(Directive(int(step), EventType(kind.strip().capitalize()),
                                 tuple(int(x) for x in labels.split("+"))))
        except ValueError:
            raise ValueError(f"bad lifecycle directive {item!r}; expected step:merge:a+b or step:split:a") from None
    return tuple(out)


def format_script(script: Iterable[Directive]) -> str:
    return ";".join(f"{d.step}:{d.type.value.lower()}:{'+'.join(map(str, d.labels))}" for d in script)


def config_from_mapping(values: Mapping[str, str]) -> ScenarioConfig:
    known = {f.name: f for f in fields(ScenarioConfig)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"unknown scenario key {key!r}")
        default = known[key].default
        if key == "lifecycle_script":
            kwargs[key] = parse_script(raw)
        elif key == "start":
            kwargs[key] = date.fromisoformat(raw)
        else:
            kwargs[key] = type(default)(raw)
    return ScenarioConfig(**kwargs)


def config_to_mapping(cfg: ScenarioConfig) -> dict[str, str]:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "lifecycle_script":
            out[f.name] = format_script(v)
        elif isinstance(v, date):
            out[f.name] = v.isoformat()
        else:
            out[f.name] = str(v)
    return out


@dataclass
class GroundTruth:
    steps: int
    membership: list[dict[str, frozenset]] = field(default_factory=list)
    lifecycle: list[tuple[int, EventType, tuple[str, ...]]] = field(default_factory=list)
    persistent: frozenset = frozenset()


def _external_entity(label: int, j: int) -> tuple[EntityRef, str]:
    kind = (EntityKind.WEBSITE, EntityKind.VIDEO_CHANNEL, EntityKind.SOCIAL_PROFILE)[j % 3]
    if kind is EntityKind.WEBSITE:
        dom = f"site-c{label}-e{j}.org"
        return EntityRef.website(dom), f"http://www.{dom}/page/"
    if kind is EntityKind.VIDEO_CHANNEL:
        cid = f"UCc{label}e{j}"
        return EntityRef(kind, cid), f"https://www.youtube.com/channel/{cid}"
    pid = f"page-c{label}-e{j}"
    return EntityRef(kind, pid), f"https://www.facebook.com/{pid}"


def generate_scenario(cfg: ScenarioConfig) -> tuple[list[EventRecord], GroundTruth]:
    """Generate an event log and the planted memberships behind it.

    Deterministic for a given config. Every planted external entity is
    linked by at least two distinct accounts each week.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    start = datetime(cfg.start.year, cfg.start.month, cfg.start.day, tzinfo=timezone.utc)

    account_label: dict[str, int] = {}
    external_label: dict[EntityRef, int] = {}
    url_of: dict[EntityRef, str] = {}
    for c in range(cfg.communities):
        for i in range(cfg.accounts_per_community):
            account_label[f"u{c}_{i}"] = c
        for j in range(cfg.external_per_community):
            ref, url = _external_entity(c, j)
            external_label[ref] = c
            url_of[ref] = url
    next_label = cfg.communities

    script: dict[int, list[Directive]] = defaultdict(list)
    for d in cfg.lifecycle_script:
        if not 1 <= d.step < cfg.steps:
            raise ValueError(f"directive step {d.step} outside 1..{cfg.steps - 1}")
        script[d.step].append(d)

    truth = GroundTruth(cfg.steps)
    log: list[EventRecord] = []
    counter = 0

    def groups():
        members: dict[int, list[str]] = defaultdict(list)
        for a, lab in account_label.items():
            members[lab].append(a)
        return {lab: sorted(ms) for lab, ms in sorted(members.items())}

    for week in range(cfg.steps + 1):
        if week >= 1:
            for d in script.get(week, []):
                live = set(account_label.values())
                if any(lab not in live for lab in d.labels):
                    raise ValueError(f"directive at step {d.step} references a missing community {d.labels}")
                if d.type is EventType.MERGE:
                    if len(d.labels) < 2:
                        raise ValueError("merge needs two or more communities")
                    keep = d.labels[0]
                    for table in (account_label, external_label):
                        for k, lab in table.items():
                            if lab in d.labels:
                                table[k] = keep
                    truth.lifecycle.append((week, EventType.MERGE, tuple(map(str, d.labels))))
                elif d.type is EventType.SPLIT:
                    (lab,) = d.labels
                    accs = sorted(a for a, l in account_label.items() if l == lab)
                    exts = sorted(e for e, l in external_label.items() if l == lab)
                    if len(accs) < 4:
                        raise ValueError(f"community {lab} is too small to split at step {d.step}")
                    for a in accs[len(accs) // 2:]:
                        account_label[a] = next_label
                    for e in exts[len(exts) // 2:]:
                        external_label[e] = next_label
                    truth.lifecycle.append((week, EventType.SPLIT, (str(lab), str(next_label))))
                    next_label += 1
                else:
                    raise ValueError(f"unsupported directive {d.type.value}")
            n_move = int(round(cfg.churn_rate * len(account_label)))
            if n_move:
                current = groups()
                if len(current) >= 2:
                    accounts = sorted(account_label)
                    for idx in rng.choice(len(accounts), size=n_move, replace=False):
                        a = accounts[idx]
                        src = account_label[a]
                        if len(current[src]) <= 3:
                            continue
                        targets = [lab for lab in current if lab != src]
                        dst = targets[rng.integers(len(targets))]
                        current[src].remove(a)
                        current[dst].append(a)
                        account_label[a] = dst

        current = groups()
        ext_groups: dict[int, list[EntityRef]] = defaultdict(list)
        for e, lab in sorted(external_label.items()):
            ext_groups[lab].append(e)
        if week < cfg.steps:
            truth.membership.append({
                str(lab): frozenset([EntityRef.account(a) for a in accs] + ext_groups.get(lab, []))
                for lab, accs in current.items()
            })

        week_start = start + timedelta(weeks=week)
        everyone = sorted(account_label)

        def emit(author, mentioned=(), reshare=None, urls=()):
            nonlocal counter
            ts = week_start + timedelta(seconds=int(rng.integers(7 * 86400)))
            log.append(EventRecord(f"e{counter}", author, ts, tuple(mentioned), reshare, tuple(urls)))
            counter += 1

        for lab, accs in current.items():
            exts = ext_groups.get(lab, [])
            others = [a for a in everyone if account_label[a] != lab]
            for a in accs:
                peers = [p for p in accs if p != a]
                for _ in range(rng.poisson(cfg.intra_event_rate / 2) if peers else 0):
                    t = peers[rng.integers(len(peers))]
                    if rng.random() < 0.5:
                        emit(a, mentioned=(t,))
                    else:
                        emit(a, reshare=t)
                for _ in range(rng.poisson(cfg.inter_event_rate / 2) if others else 0):
                    t = others[rng.integers(len(others))]
                    emit(a, mentioned=(t,))
                for _ in range(rng.poisson(cfg.url_event_rate / 2) if exts else 0):
                    e = exts[rng.integers(len(exts))]
                    emit(a, urls=(url_of[e],))
            if len(accs) >= 2:
                for e in exts:
                    for idx in rng.choice(len(accs), size=2, replace=False):
                        emit(accs[idx], urls=(url_of[e],))

    labels_each_step = [set(m) for m in truth.membership]
    truth.persistent = frozenset(set.intersection(*labels_each_step)) if labels_each_step else frozenset()
    log.sort(key=lambda r: r.timestamp)
    return log, truth


# --- evaluation ------------------------------------------------------------------

def jaccard(a: frozenset, b: frozenset) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def greedy_match(found: Sequence[frozenset], planted: Sequence[frozenset]) -> list[tuple[int, int, float]]:
    """Repeatedly pair the highest-Jaccard (found, planted) couple; ties by index."""
    pairs = sorted(
        ((jaccard(f, p), i, j) for i, f in enumerate(found) for j, p in enumerate(planted)),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    used_f, used_p, out = set(), set(), []
    for score, i, j in pairs:
        if score <= 0 or i in used_f or j in used_p:
            continue
        used_f.add(i)
        used_p.add(j)
        out.append((i, j, score))
    return out


@dataclass(frozen=True)
class TrackingScores:
    mean_jaccard: float
    events_recovered: float
    persistent_precision: float
    persistent_recall: float


def observed_every_step(state: TimelineSet) -> list[str]:
    return [
        tl.id for tl in state.open_timelines()
        if {s for s, _ in tl.observations} >= set(range(state.step_count))
    ]


def truth_from_timelines(state: TimelineSet) -> GroundTruth:
    """Treat a tracking result as ground truth (labels are timeline ids)."""
    membership = [
        {tl.id: c.members for tl in state.timelines for s, c in tl.observations if s == t}
        for t in range(state.step_count)
    ]
    lifecycle = [
        (ev.step, ev.type, (tl.id,) + ev.related)
        for tl in state.timelines for ev in tl.events
        if ev.type in (EventType.MERGE, EventType.SPLIT)
    ]
    return GroundTruth(state.step_count, membership, lifecycle, frozenset(observed_every_step(state)))


def evaluate_tracking(found: TimelineSet, truth: GroundTruth,
                      persistent: Iterable[str] | None = None) -> TrackingScores:
    """Score a tracking result against planted communities.

    Per step, found communities are greedily matched to planted ones by
    Jaccard; the step score is the summed matched Jaccard over the number of
    planted communities. A planted Merge/Split counts as recovered when any
    timeline records the same event type within one step of it.
    ``persistent`` lists the found persistent timeline ids; by default, open
    timelines observed at every step.
    """
    if found.step_count != truth.steps:
        raise ValueError(f"step mismatch: found {found.step_count}, truth {truth.steps}")
    if not found.timelines:
        return TrackingScores(0.0, 0.0, 0.0, 0.0)

    owner: dict[str, str] = {}
    label_votes: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    step_scores = []
    for t in range(truth.steps):
        planted = sorted(truth.membership[t].items())
        obs = [(tl.id, c.members) for tl in found.timelines for s, c in tl.observations if s == t]
        if not planted:
            continue
        matches = greedy_match([m for _, m in obs], [m for _, m in planted])
        step_scores.append(sum(s for _, _, s in matches) / len(planted))
        for i, j, _ in matches:
            label_votes[obs[i][0]][planted[j][0]] += 1
    for tid, votes in label_votes.items():
        owner[tid] = max(sorted(votes), key=lambda lab: votes[lab])
    mean_j = sum(step_scores) / len(step_scores) if step_scores else 0.0

    found_events = [(ev.step, ev.type) for tl in found.timelines for ev in tl.events]
    if truth.lifecycle:
        hits = sum(
            any(ft == etype and abs(fs - step) <= 1 for fs, ft in found_events)
            for step, etype, _ in truth.lifecycle
        )
        recovered = hits / len(truth.lifecycle)
    else:
        recovered = 1.0

    pers = list(observed_every_step(found) if persistent is None else persistent)
    hit_labels = set()
    true_pos = 0
    for tid in pers:
        lab = owner.get(tid)
        if lab in truth.persistent and lab not in hit_labels:
            hit_labels.add(lab)
            true_pos += 1
    if pers:
        precision = true_pos / len(pers)
    else:
        precision = 1.0 if not truth.persistent else 0.0
    recall = len(hit_labels) / len(truth.persistent) if truth.persistent else (1.0 if not pers else 0.0)
    return TrackingScores(mean_j, recovered, precision, recall)
