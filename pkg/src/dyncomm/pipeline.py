"""Staged pipeline: ingest -> windows -> detect -> track -> characterize.

Each stage writes its artifacts into the output directory together with a
``<stage>.stage.json`` stamp holding the stage's config digest and the
SHA-256 of every file it wrote. Downstream stages refuse to run on
artifacts whose digest does not match the current configuration.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime, timedelta
from pathlib import Path

from filelock import FileLock, Timeout

from . import formats
from .characterize import (
    RankMode,
    activity_zscore,
    rank_members,
    write_activity,
    write_manifest,
    write_rankings,
)
from .consensus import ConsensusParams, consensus_communities
from .events import EntityKind, dataset_stats, load_resolver, read_events, write_events
from .network import (
    EdgeFilterParams,
    Window,
    WindowSpec,
    activity_curve,
    build_step_network,
    make_windows,
)
from .tracking import TimelineSet, TrackingParams, advance_step, extract_persistent

logger = logging.getLogger(__name__)

STAGES = ("ingest", "windows", "detect", "track", "characterize")
WORKERS_ENV = "DYNCOMM_WORKERS"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"invalid value for '{key}': {message}")


class StageError(RuntimeError):
    pass


def _parse_scales(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


@dataclass
class PipelineConfig:
    """Every pipeline parameter; defaults are the published settings."""

    events: str = ""
    resolver: str = ""
    start: str = ""
    end: str = ""
    length_days: int = 14
    stride_days: int = 7
    k: float = 2.0
    runs: int = 100
    tau: float = 0.5
    max_iterations: int = 20
    seed: int = 0
    alpha: float = 0.5
    match_threshold: float = 0.25
    out: str = "out"
    activity_scales: str = "1,2,3,4,5,6,7,14,21,28,35,42,49,56"
    top_k: int = 10

    @classmethod
    def from_mapping(cls, values: dict[str, str], base: "PipelineConfig | None" = None) -> "PipelineConfig":
        cfg = base if base is not None else cls()
        known = {f.name: f for f in fields(cls)}
        updates = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(key, f"unknown key (valid keys: {', '.join(known)})")
            typ = type(known[key].default)
            try:
                updates[key] = typ(raw) if typ is not str else str(raw)
            except ValueError:
                raise ConfigError(key, f"cannot parse {raw!r} as {typ.__name__}") from None
        return cls(**{**asdict(cfg), **updates})

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_mapping(read_key_values(path))

    def validate(self) -> None:
        def check(key, ok, valid):
            if not ok:
                raise ConfigError(key, f"{getattr(self, key)!r} (valid range {valid})")

        check("length_days", self.length_days > 0, "> 0")
        check("stride_days", 0 < self.stride_days <= self.length_days, "(0, length_days]")
        check("k", self.k >= 0, "[0, inf)")
        check("runs", self.runs >= 1, "[1, inf)")
        check("tau", 0.0 <= self.tau <= 1.0, "[0,1]")
        check("max_iterations", self.max_iterations >= 1, "[1, inf)")
        check("alpha", 0.0 < self.alpha <= 1.0, "(0,1]")
        check("match_threshold", 0.0 <= self.match_threshold <= 1.0, "[0,1]")
        check("top_k", self.top_k >= 1, "[1, inf)")
        for key in ("start", "end"):
            if getattr(self, key):
                try:
                    date.fromisoformat(getattr(self, key))
                except ValueError:
                    raise ConfigError(key, f"{getattr(self, key)!r} is not an ISO date") from None
        try:
            scales = _parse_scales(self.activity_scales)
        except ValueError:
            scales = ()
        check("activity_scales", bool(scales) and min(scales) > 0, "comma-separated positive day counts")

    def to_mapping(self) -> dict[str, str]:
        return {k: str(v) for k, v in asdict(self).items()}


def read_key_values(path: str | Path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}: line {lineno}: expected key=value")
            values[key.strip()] = value.strip()
    return values


def write_key_values(path: str | Path, values: dict[str, str]) -> None:
    formats.atomic_write_text(path, "".join(f"{k}={v}\n" for k, v in values.items()))


# keys each stage depends on, cumulatively
_STAGE_KEYS = {
    "ingest": ("events", "resolver"),
    "windows": ("start", "end", "length_days", "stride_days", "k"),
    "detect": ("runs", "tau", "max_iterations", "seed"),
    "track": ("alpha", "match_threshold"),
    "characterize": ("activity_scales", "top_k"),
}


def _file_digest(path: str) -> str:
    return formats.sha256_file(path) if path else ""


def stage_digest(cfg: PipelineConfig, stage: str) -> str:
    """Digest of the parameters (and input file contents) ``stage`` depends on."""
    payload = {}
    for s in STAGES[: STAGES.index(stage) + 1]:
        for key in _STAGE_KEYS[s]:
            value = getattr(cfg, key)
            payload[key] = _file_digest(value) if key in ("events", "resolver") else value
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Summary:
    steps: int = 0
    communities_per_step: list[int] = field(default_factory=list)
    timelines: int = 0
    persistent: int = 0
    unconverged_steps: list[int] = field(default_factory=list)

    def render(self) -> str:
        lines = [
            f"steps built: {self.steps}",
            f"communities per step: {' '.join(map(str, self.communities_per_step))}",
            f"timelines: {self.timelines}",
            f"persistent: {self.persistent}",
        ]
        if self.unconverged_steps:
            lines.append(f"consensus not converged at steps: {self.unconverged_steps}")
        return "\n".join(lines)


class Pipeline:
    def __init__(self, cfg: PipelineConfig):
        cfg.validate()
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.summary = Summary()

    # --- stamps -----------------------------------------------------------------

    def _stamp_path(self, stage: str) -> Path:
        return self.out / f"{stage}.stage.json"

    def _meta(self, stage: str) -> dict:
        return {"stage": stage, "config_digest": stage_digest(self.cfg, stage)}

    def _write_stamp(self, stage: str, files: list[Path]) -> None:
        stamp = {
            "stage": stage,
            "config_digest": stage_digest(self.cfg, stage),
            "files": {p.relative_to(self.out).as_posix(): formats.sha256_file(p) for p in sorted(files)},
        }
        formats.write_json(self._stamp_path(stage), stamp)

    def _require(self, stage: str) -> dict:
        path = self._stamp_path(stage)
        if not path.exists():
            raise StageError(f"no '{stage}' artifacts in {self.out}; run the '{stage}' stage first")
        stamp = json.loads(path.read_text())
        if stamp.get("config_digest") != stage_digest(self.cfg, stage):
            raise StageError(
                f"'{stage}' artifacts in {self.out} were produced with a different configuration; "
                f"re-run '{stage}'"
            )
        for rel, digest in stamp.get("files", {}).items():
            p = self.out / rel
            if not p.exists() or formats.sha256_file(p) != digest:
                raise StageError(f"artifact {p} is missing or modified; re-run '{stage}'")
        return stamp

    # --- shared loaders ---------------------------------------------------------------

    def _events(self):
        self._require("ingest")
        return read_events(self.out / "events.jsonl")

    def _windows(self) -> list[Window]:
        self._require("windows")
        _, _, rows = formats.read_tsv(self.out / "windows.tsv")
        return [Window(int(i), datetime.fromisoformat(s), datetime.fromisoformat(e)) for i, s, e in rows]

    def _networks(self, windows):
        return [formats.read_edge_list(self.out / "networks" / f"step_{w.index:03d}.tsv") for w in windows]

    def _communities(self):
        self._require("detect")
        _, by_step = formats.read_communities(self.out / "communities.tsv")
        return by_step

    def load_timelines(self) -> TimelineSet:
        self._require("track")
        _, state = formats.read_timelines(self.out / "timelines.tsv", self._communities())
        return state

    def _period(self, log) -> tuple[date, date]:
        if self.cfg.start:
            start = date.fromisoformat(self.cfg.start)
        elif log:
            start = log[0].timestamp.date()
        else:
            raise StageError("cannot infer 'start' from an empty event log")
        if self.cfg.end:
            end = date.fromisoformat(self.cfg.end)
        elif log:
            end = log[-1].timestamp.date() + timedelta(days=1)
        else:
            raise StageError("cannot infer 'end' from an empty event log")
        return start, end

    # --- stages -------------------------------------------------------------------

    def ingest(self) -> None:
        for key in ("events", "resolver"):
            path = getattr(self.cfg, key)
            if key == "events" and not path:
                raise FileNotFoundError("no events file configured (key 'events')")
            if path and not Path(path).exists():
                raise FileNotFoundError(f"input file not found: {path} (key '{key}')")
        log = read_events(self.cfg.events)
        resolver = load_resolver(self.cfg.resolver or None)
        self.out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        write_events(log, buf)
        formats.atomic_write_text(self.out / "events.jsonl", buf.getvalue())
        stats = dataset_stats(log, resolver)
        stats_path = formats.write_tsv(self.out / "stats.tsv", stats.HEADER, [stats.as_tuple()],
                                       self._meta("ingest"))
        self._write_stamp("ingest", [self.out / "events.jsonl", stats_path])
        logger.info("ingested %d events", len(log))

    def windows(self) -> None:
        log = self._events()
        resolver = load_resolver(self.cfg.resolver or None)
        start, end = self._period(log)
        spec = WindowSpec(start, end, timedelta(days=self.cfg.length_days),
                          timedelta(days=self.cfg.stride_days))
        try:
            windows = make_windows(spec)
        except ValueError as exc:
            raise ConfigError("start", str(exc)) from None
        meta = self._meta("windows")
        files = [formats.write_tsv(
            self.out / "windows.tsv", ("step", "start", "end"),
            [(w.index, w.start.isoformat(), w.end.isoformat()) for w in windows], meta)]
        filt = EdgeFilterParams(self.cfg.k)
        for w in windows:
            net = build_step_network(log, w, resolver, filt)
            files.append(formats.write_edge_list(self.out / "networks" / f"step_{w.index:03d}.tsv", net, meta))
            files.append(formats.write_graphml(self.out / "networks" / f"step_{w.index:03d}.graphml", net))
        self._write_stamp("windows", files)
        self.summary.steps = len(windows)

    def detect(self) -> None:
        windows = self._windows()
        nets = self._networks(windows)
        params = ConsensusParams(self.cfg.runs, self.cfg.tau, self.cfg.max_iterations, self.cfg.seed)
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
        if workers > 1 and len(nets) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(consensus_communities, nets, [params] * len(nets)))
        else:
            results = [consensus_communities(n, params) for n in nets]
        communities = [c for r in results for c in r.communities]
        meta = self._meta("detect")
        files = [
            formats.write_communities(self.out / "communities.tsv", communities, meta),
            formats.write_tsv(self.out / "consensus.tsv", ("step", "communities", "iterations", "converged"),
                              [(n.index, len(r.communities), r.iterations, int(r.converged))
                               for n, r in zip(nets, results)], meta),
        ]
        self._write_stamp("detect", files)
        self.summary.steps = len(nets)
        self.summary.communities_per_step = [len(r.communities) for r in results]
        self.summary.unconverged_steps = [n.index for n, r in zip(nets, results) if not r.converged]

    def track(self) -> None:
        by_step = self._communities()
        windows = self._windows()
        log = self._events()
        params = TrackingParams(self.cfg.alpha, self.cfg.match_threshold)
        state = TimelineSet()
        for w in windows:
            state = advance_step(state, by_step.get(w.index, []), params, step=w.index)
        persistent = extract_persistent(state, log, windows)
        meta = self._meta("track")
        header, grid = formats.timeline_grid(state)
        files = [
            formats.write_timelines(self.out / "timelines.tsv", state, meta),
            formats.write_tsv(self.out / "timeline_grid.tsv", header, grid, meta),
            formats.write_tsv(self.out / "persistent.tsv", ("timeline_id",),
                              [(tl.id,) for tl in persistent], meta),
        ]
        self._write_stamp("track", files)
        self.summary.steps = len(windows)
        self.summary.communities_per_step = [len(by_step.get(w.index, [])) for w in windows]
        self.summary.timelines = len(state.timelines)
        self.summary.persistent = len(persistent)

    def characterize(self) -> None:
        log = self._events()
        windows = self._windows()
        state = self.load_timelines()
        nets = {n.index: n for n in self._networks(windows)}
        _, _, rows = formats.read_tsv(self.out / "persistent.tsv")
        persistent = [r[0] for r in rows]
        start, end = self._period(log)
        meta = self._meta("characterize")

        rankings = {}
        series = {}
        for tid in persistent:
            for mode in RankMode:
                rankings[(tid, mode.value)] = rank_members(
                    state, tid, mode, nets, (EntityKind.WEBSITE,), state.step_count, self.cfg.top_k)
            accounts = {m.id for m in state.get(tid).members() if m.kind is EntityKind.ACCOUNT}
            series[tid] = activity_zscore(log, accounts, (start, end))
        span_days = (end - start).days
        scales = [timedelta(days=d) for d in _parse_scales(self.cfg.activity_scales) if d <= span_days]
        curve = activity_curve(log, (start, end), scales) if log and scales else {}
        files = [
            write_rankings(self.out / "rankings.tsv", rankings, meta),
            write_activity(self.out / "activity.tsv", series, meta),
            formats.write_tsv(self.out / "activity_curve.tsv", ("scale_days", "mean_active_fraction"),
                              [(s.days, v) for s, v in curve.items()], meta),
        ]
        self._write_stamp("characterize", files)
        # manifest over every artifact of every stage
        every = []
        for stage in STAGES:
            stamp = json.loads(self._stamp_path(stage).read_text())
            every.extend(self.out / rel for rel in stamp["files"])
        write_manifest(self.out, every, self.cfg.to_mapping(), self.cfg.seed)
        self.summary.timelines = len(state.timelines)
        self.summary.persistent = len(persistent)

    def run(self, stages=STAGES) -> Summary:
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            raise ConfigError("stages", f"unknown stage(s) {unknown}; choose from {', '.join(STAGES)}")
        self.out.mkdir(parents=True, exist_ok=True)
        lock = FileLock(str(self.out / ".lock"))
        try:
            lock.acquire(timeout=0)
        except Timeout:
            raise StageError(f"another pipeline process holds {self.out}/.lock") from None
        try:
            for stage in STAGES:
                if stage in stages:
                    logger.info("running stage %s", stage)
                    getattr(self, stage)()
        finally:
            lock.release()
        return self.summary


def run_pipeline(config: str | Path | PipelineConfig, stages=STAGES) -> Summary:
    cfg = config if isinstance(config, PipelineConfig) else PipelineConfig.from_file(config)
    return Pipeline(cfg).run(stages)
