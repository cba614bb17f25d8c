"""Community characterization: member rankings, activity series and exports."""

from __future__ import annotations

import enum
import statistics
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path

import networkx as nx

from . import formats
from .events import EntityKind, EntityRef, EventRecord
from .network import StepNetwork, as_utc
from .tracking import Timeline, TimelineSet


class RankMode(str, enum.Enum):
    FREQUENCY = "Frequency"
    NORMALIZED_DEGREE = "NormalizedDegree"


@dataclass(frozen=True)
class RankingEntry:
    entity: EntityRef
    score: float
    rank: int


def _network_for(networks: Sequence[StepNetwork] | Mapping[int, StepNetwork], step: int) -> StepNetwork:
    if isinstance(networks, Mapping):
        return networks[step]
    for net in networks:
        if net.index == step:
            return net
    raise KeyError(f"no step network for step {step}")


def rank_members(
    state: TimelineSet,
    timeline_id: str,
    mode: RankMode | str = RankMode.FREQUENCY,
    networks: Sequence[StepNetwork] | Mapping[int, StepNetwork] = (),
    kind_filter: Iterable[EntityKind] | None = (EntityKind.WEBSITE,),
    total_steps: int | None = None,
    top_k: int | None = 10,
) -> list[RankingEntry]:
    """Rank a timeline's members by step-membership frequency or normalized degree.

    Normalized degree sums, over the timeline's observed steps, the member's
    weighted degree in the step network restricted to that step's community,
    and divides by ``total_steps`` (all steps of the analysis, default
    ``state.step_count``). ``kind_filter=None`` ranks every node kind.
    """
    tl: Timeline = state.get(timeline_id)
    mode = RankMode(mode)
    kinds = None if kind_filter is None else set(kind_filter)
    total = total_steps if total_steps is not None else state.step_count
    if total <= 0:
        raise ValueError("total_steps must be positive")

    scores: Counter = Counter()
    for step, community in tl.observations:
        if mode is RankMode.FREQUENCY:
            for m in community.members:
                scores[m] += 1
            continue
        g = _network_for(networks, step).to_networkx().subgraph(community.members)
        for m in community.members:
            scores[m] += g.degree(m, weight="weight") if m in g else 0.0
    if mode is RankMode.NORMALIZED_DEGREE:
        scores = Counter({m: s / total for m, s in scores.items()})

    items = [(m, s) for m, s in scores.items() if kinds is None or m.kind in kinds]
    items.sort(key=lambda ms: (-ms[1], ms[0].id, ms[0].kind.value))
    if top_k is not None:
        items = items[:top_k]
    return [RankingEntry(m, s, i + 1) for i, (m, s) in enumerate(items)]


@dataclass(frozen=True)
class ActivitySeries:
    dates: tuple[date, ...]
    community_counts: tuple[int, ...]
    rest_counts: tuple[int, ...]
    community_z: tuple[float, ...]
    rest_z: tuple[float, ...]


def zscore(values: Sequence[float]) -> list[float]:
    """Population z-scores; a constant series maps to zeros."""
    if not values:
        return []
    mu = statistics.fmean(values)
    sd = statistics.pstdev(values)
    if sd == 0:
        return [0.0] * len(values)
    return [(v - mu) / sd for v in values]


def activity_zscore(log: Iterable[EventRecord], community_accounts: Iterable[str],
                    period: tuple[date | datetime, date | datetime]) -> ActivitySeries:
    """Daily event counts of a community and of all other accounts, z-scored."""
    start, end = as_utc(period[0]), as_utc(period[1])
    days = (end - start) // timedelta(days=1)
    if days <= 0:
        raise ValueError("activity period must span at least one day")
    members = set(community_accounts)
    comm = [0] * days
    rest = [0] * days
    for r in log:
        if not start <= r.timestamp < end:
            continue
        i = (r.timestamp - start) // timedelta(days=1)
        if i >= days:
            continue
        if r.author in members:
            comm[i] += 1
        else:
            rest[i] += 1
    dates = tuple((start + timedelta(days=i)).date() for i in range(days))
    return ActivitySeries(dates, tuple(comm), tuple(rest), tuple(zscore(comm)), tuple(zscore(rest)))


def subgraph_components(net: StepNetwork, members: Iterable[EntityRef], accounts_only: bool = False) -> int:
    """Connected components of the community-induced subgraph.

    With ``accounts_only`` the non-account nodes are removed first, as when
    the network is reduced to the interaction platform alone.
    """
    keep = [m for m in members if not accounts_only or m.kind is EntityKind.ACCOUNT]
    g = net.to_networkx().subgraph(keep).copy()
    g.add_nodes_from(keep)
    return nx.number_connected_components(g)


RANKING_HEADER = ("timeline_id", "mode", "rank", "entity_kind", "entity_id", "score")
ACTIVITY_HEADER = ("timeline_id", "date", "community_count", "rest_count", "community_z", "rest_z")


def write_rankings(path, rankings: Mapping[tuple[str, str], Sequence[RankingEntry]],
                   meta: dict | None = None) -> Path:
    rows = [
        (tid, mode, e.rank, e.entity.kind.value, e.entity.id, e.score)
        for (tid, mode), entries in sorted(rankings.items())
        for e in entries
    ]
    return formats.write_tsv(path, RANKING_HEADER, rows, meta)


def write_activity(path, series: Mapping[str, ActivitySeries], meta: dict | None = None) -> Path:
    rows = [
        (tid, d.isoformat(), c, r, cz, rz)
        for tid, s in sorted(series.items())
        for d, c, r, cz, rz in zip(s.dates, s.community_counts, s.rest_counts, s.community_z, s.rest_z)
    ]
    return formats.write_tsv(path, ACTIVITY_HEADER, rows, meta)


def write_manifest(out_dir, files: Iterable[Path], config: Mapping | None = None,
                   seed: int | None = None) -> dict:
    """Record config, seed and a SHA-256 per file; no timestamps, so reruns are byte-identical."""
    out = Path(out_dir)
    manifest = {
        "config": dict(config or {}),
        "seed": seed,
        "files": {Path(p).relative_to(out).as_posix(): formats.sha256_file(p) for p in sorted(files)},
    }
    formats.write_json(out / "manifest.json", manifest)
    return manifest


def export_bundle(
    state: TimelineSet,
    networks: Sequence[StepNetwork],
    rankings: Mapping[tuple[str, str], Sequence[RankingEntry]],
    series: Mapping[str, ActivitySeries],
    out_dir: str | Path,
    config: Mapping | None = None,
    seed: int | None = None,
    persistent: Iterable[str] = (),
) -> dict:
    """Write every analysis artifact plus ``manifest.json`` into ``out_dir``.

    ``rankings`` is keyed by ``(timeline_id, mode)``. Returns the manifest.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written: list[Path] = []
    for net in networks:
        written.append(formats.write_edge_list(out / "networks" / f"step_{net.index:03d}.tsv", net))
        written.append(formats.write_graphml(out / "networks" / f"step_{net.index:03d}.graphml", net))
    communities = [c for step in range(state.step_count) for c in state.communities_at(step)]
    written.append(formats.write_communities(out / "communities.tsv", communities))
    written.append(formats.write_timelines(out / "timelines.tsv", state))
    header, grid = formats.timeline_grid(state)
    written.append(formats.write_tsv(out / "timeline_grid.tsv", header, grid))
    written.append(formats.write_tsv(out / "persistent.tsv", ("timeline_id",), [(t,) for t in persistent]))
    written.append(write_rankings(out / "rankings.tsv", rankings))
    written.append(write_activity(out / "activity.tsv", series))
    return write_manifest(out, written, config, seed)
