"""Command-line entry point.

Examples::

    dyncomm run-all --config run.cfg
    dyncomm detect --config run.cfg --seed 7
    dyncomm synth --scenario scenario.cfg --out synth/
    dyncomm evaluate --config run.cfg --truth synth/
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from pathlib import Path

from . import formats
from .events import EventParseError, write_events
from .pipeline import (
    STAGES,
    ConfigError,
    Pipeline,
    PipelineConfig,
    StageError,
    read_key_values,
    run_pipeline,
    write_key_values,
)
from .synth import (
    GroundTruth,
    config_from_mapping,
    config_to_mapping,
    evaluate_tracking,
    generate_scenario,
)
from .tracking import EventType

logger = logging.getLogger("dyncomm")


def _load_config(args) -> PipelineConfig:
    values = read_key_values(args.config) if args.config else {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "expected --set key=value")
        values[key.strip()] = value.strip()
    if args.out:
        values["out"] = args.out
    if args.seed is not None:
        values["seed"] = str(args.seed)
    cfg = PipelineConfig.from_mapping(values)
    cfg.validate()
    return cfg


def write_truth(out: Path, truth: GroundTruth) -> None:
    rows = [
        (step, label, m.kind.value, m.id)
        for step, groups in enumerate(truth.membership)
        for label, members in sorted(groups.items())
        for m in sorted(members)
    ]
    meta = {"steps": truth.steps}
    formats.write_tsv(out / "truth_communities.tsv", formats.COMMUNITY_HEADER, rows, meta)
    formats.write_tsv(out / "truth_lifecycle.tsv", ("step", "event_type", "labels"),
                      [(s, t.value, ";".join(labels)) for s, t, labels in truth.lifecycle], meta)
    formats.write_tsv(out / "truth_persistent.tsv", ("label",), [(lab,) for lab in sorted(truth.persistent)], meta)


def read_truth(path: Path) -> GroundTruth:
    meta, by_step = formats.read_communities(path / "truth_communities.tsv")
    steps = int(meta["steps"])
    membership = [{c.id: c.members for c in by_step.get(t, [])} for t in range(steps)]
    _, _, rows = formats.read_tsv(path / "truth_lifecycle.tsv")
    lifecycle = [(int(s), EventType(t), tuple(labels.split(";"))) for s, t, labels in rows]
    _, _, rows = formats.read_tsv(path / "truth_persistent.tsv")
    return GroundTruth(steps, membership, lifecycle, frozenset(r[0] for r in rows))


def cmd_stage(args) -> int:
    cfg = _load_config(args)
    if args.command == "run-all":
        stages = tuple(s.strip() for s in args.stages.split(",")) if args.stages else STAGES
    else:
        stages = (args.command,)
    summary = run_pipeline(cfg, stages)
    print(summary.render())
    return 0


def cmd_synth(args) -> int:
    values = read_key_values(args.scenario) if args.scenario else {}
    if args.seed is not None:
        values["seed"] = str(args.seed)
    scenario = config_from_mapping(values)
    out = Path(args.out or "synth")
    log, truth = generate_scenario(scenario)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    write_events(log, buf)
    formats.atomic_write_text(out / "events.jsonl", buf.getvalue())
    write_key_values(out / "scenario.cfg", config_to_mapping(scenario))
    write_truth(out, truth)
    spec = scenario.window_spec
    print(f"wrote {len(log)} events to {out / 'events.jsonl'}")
    print(f"window range: start={spec.start.isoformat()} end={spec.end.isoformat()}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    if not args.truth:
        raise ConfigError("truth", "evaluate needs --truth <directory written by 'synth'>")
    out = Path(cfg.out)
    pipe = Pipeline(cfg)
    state = pipe.load_timelines()
    _, _, rows = formats.read_tsv(out / "persistent.tsv")
    truth = read_truth(Path(args.truth))
    scores = evaluate_tracking(state, truth, [r[0] for r in rows])
    result = {
        "mean_jaccard": scores.mean_jaccard,
        "events_recovered": scores.events_recovered,
        "persistent_precision": scores.persistent_precision,
        "persistent_recall": scores.persistent_recall,
    }
    formats.write_json(out / "evaluation.json", result)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyncomm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value pipeline config file")
        p.add_argument("--out", help="output directory (overrides 'out')")
        p.add_argument("--seed", type=int, help="consensus seed (overrides 'seed')")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")

    for stage in STAGES:
        common(sub.add_parser(stage, help=f"run the {stage} stage"))
    p = sub.add_parser("run-all", help="run every stage in order")
    common(p)
    p.add_argument("--stages", help=f"comma-separated subset of: {','.join(STAGES)}")

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--scenario", help="key=value scenario file")
    p.add_argument("--out", help="output directory (default: synth)")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("evaluate", help="score tracked timelines against a synthetic ground truth")
    common(p)
    p.add_argument("--truth", help="directory written by 'synth'")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        return cmd_stage(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StageError, FileNotFoundError, EventParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
