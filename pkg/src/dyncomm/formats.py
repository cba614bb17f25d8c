"""Delimited table and graph-file formats shared by exports and pipeline stages.

All tables are UTF-8, tab-delimited, with a header row. A table may start
with ``# key=value`` comment lines carrying metadata such as the config
digest that produced it. Files are written to a temporary sibling and
renamed into place, so an interrupted write never leaves a partial file.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path

import networkx as nx

from .consensus import StepCommunity
from .events import EntityKind, EntityRef
from .network import Edge, EdgeTag, StepNetwork, Window
from .tracking import EventType, LifecycleEvent, Timeline, TimelineSet

EDGE_HEADER = ("source_kind", "source_id", "target_kind", "target_id", "tag", "weight")
COMMUNITY_HEADER = ("step", "community_id", "member_kind", "member_id")
TIMELINE_HEADER = ("timeline_id", "step", "community_id", "event_type", "member_count", "related")
ABSENT = "ABSENT"


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    text = str(value)
    if "\t" in text or "\n" in text:
        raise ValueError(f"cell contains a tab or newline: {text!r}")
    return text


def render_tsv(header: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> str:
    lines = [f"# {k}={v}" for k, v in (meta or {}).items()]
    lines.append("\t".join(header))
    lines.extend("\t".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_tsv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence],
              meta: dict | None = None) -> Path:
    atomic_write_text(path, render_tsv(header, rows, meta))
    return Path(path)


def read_tsv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if header is None and line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if header is None:
                header = line.split("\t")
                continue
            if line:
                rows.append(line.split("\t"))
    if header is None:
        raise ValueError(f"{path}: missing header row")
    return meta, header, rows


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: str | Path, obj) -> Path:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return Path(path)


# --- step networks ------------------------------------------------------------

def edge_rows(net: StepNetwork):
    for e in net.edges:
        yield (e.u.kind.value, e.u.id, e.v.kind.value, e.v.id, e.tag.value, e.weight)


def write_edge_list(path, net: StepNetwork, meta: dict | None = None) -> Path:
    meta = dict(meta or {})
    meta.setdefault("step", net.index)
    if net.window is not None:
        meta.setdefault("window_start", net.window.start.isoformat())
        meta.setdefault("window_end", net.window.end.isoformat())
    return write_tsv(path, EDGE_HEADER, edge_rows(net), meta)


def read_edge_list(path) -> StepNetwork:
    from datetime import datetime

    meta, _, rows = read_tsv(path)
    edges = [
        Edge(EntityRef(EntityKind(sk), si), EntityRef(EntityKind(tk), ti), EdgeTag(tag), float(w))
        for sk, si, tk, ti, tag, w in rows
    ]
    window = None
    if "window_start" in meta:
        window = Window(int(meta["step"]), datetime.fromisoformat(meta["window_start"]),
                        datetime.fromisoformat(meta["window_end"]))
    return StepNetwork.from_edges(int(meta.get("step", 0)), window, edges)


def write_graphml(path, net: StepNetwork) -> Path:
    """GraphML with ``kind`` and ``label`` node attributes and ``tag``/``weight`` on edges."""
    g = nx.Graph()
    for n in sorted(net.nodes):
        g.add_node(str(n), kind=n.kind.value, label=n.id)
    for e in net.edges:
        g.add_edge(str(e.u), str(e.v), tag=e.tag.value, weight=e.weight)
    text = "\n".join(nx.generate_graphml(g)) + "\n"
    atomic_write_text(path, text)
    return Path(path)


# --- communities and timelines -------------------------------------------------

def community_rows(communities: Iterable[StepCommunity]):
    for c in communities:
        for m in sorted(c.members):
            yield (c.step, c.id, m.kind.value, m.id)


def write_communities(path, communities: Iterable[StepCommunity], meta: dict | None = None) -> Path:
    return write_tsv(path, COMMUNITY_HEADER, community_rows(communities), meta)


def read_communities(path) -> tuple[dict, dict[int, list[StepCommunity]]]:
    meta, _, rows = read_tsv(path)
    grouped: dict[tuple[int, str], set] = {}
    for step, cid, kind, mid in rows:
        grouped.setdefault((int(step), cid), set()).add(EntityRef(EntityKind(kind), mid))
    by_step: dict[int, list[StepCommunity]] = {}
    for (step, cid), members in grouped.items():
        by_step.setdefault(step, []).append(StepCommunity(step, cid, frozenset(members)))
    return meta, by_step


def timeline_rows(state: TimelineSet):
    for tl in state.timelines:
        obs = {s: c for s, c in tl.observations}
        for ev in tl.events:
            c = obs.get(ev.step) if ev.type is not EventType.ABSENT else None
            yield (tl.id, ev.step, c.id if c else ABSENT, ev.type.value,
                   len(c.members) if c else 0, ";".join(ev.related))


def write_timelines(path, state: TimelineSet, meta: dict | None = None) -> Path:
    meta = dict(meta or {})
    meta.setdefault("step_count", state.step_count)
    return write_tsv(path, TIMELINE_HEADER, timeline_rows(state), meta)


def read_timelines(path, communities: dict[int, list[StepCommunity]]) -> tuple[dict, TimelineSet]:
    """Rebuild a TimelineSet from its event table and the community table."""
    meta, _, rows = read_tsv(path)
    index = {c.id: c for cs in communities.values() for c in cs}
    timelines: dict[str, Timeline] = {}
    for tid, step, cid, etype, _count, related in rows:
        tl = timelines.setdefault(tid, Timeline(tid))
        step = int(step)
        rel = tuple(r for r in related.split(";") if r)
        etype = EventType(etype)
        tl.events.append(LifecycleEvent(step, etype, rel, None if cid == ABSENT else cid))
        if etype is not EventType.ABSENT:
            tl.observations.append((step, index[cid]))
    # replay merges in step order so inherited histories chain correctly
    merges = sorted(
        ((ev.step, tl.id, ev.related) for tl in timelines.values() for ev in tl.events
         if ev.type is EventType.MERGE),
    )
    for step, survivor, absorbed in merges:
        for tid in absorbed:
            closed = timelines[tid]
            timelines[survivor].inherited.extend(closed.full_history())
            closed.closed_into, closed.closed_at = survivor, step
    state = TimelineSet(list(timelines.values()), int(meta.get("step_count", 0)))
    return meta, state


def timeline_grid(state: TimelineSet) -> tuple[list[str], list[list[str]]]:
    """Step-by-timeline grid for timeline diagrams.

    Cells hold the observed community id, ``ABSENT`` for an unmatched step of
    a live timeline, ``>Dk`` at the step a timeline was merged into ``Dk``,
    and an empty string before birth or after closure.
    """
    header = ["step"] + [tl.id for tl in state.timelines]
    rows = []
    for step in range(state.step_count):
        row = [str(step)]
        for tl in state.timelines:
            c = tl.observation_at(step)
            born = tl.observations and tl.observations[0][0] <= step
            if c is not None:
                row.append(c.id)
            elif tl.closed_at is not None and step >= tl.closed_at:
                row.append(f">{tl.closed_into}" if step == tl.closed_at else "")
            elif born:
                row.append(ABSENT)
            else:
                row.append("")
        rows.append(row)
    return header, rows
