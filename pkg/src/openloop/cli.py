"""Command-line surface.

Exit codes: 0 success, 2 configuration error, 3 run error, 4 corrupt
log on resume.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import events as ev
from . import metrics as met
from .config import ConfigError, RunConfig, load_config
from .engine import EngineError, build_fm_backend, build_sandbox, resume_run, start_run
from .gateway import Gateway
from .rundir import RunDir, RunDirError
from .sandbox import run_checks
from .store import Status

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_RESUME_CORRUPT = 4


def _load(args) -> RunConfig:
    if args.config:
        return load_config(args.config)
    return RunConfig()


def _print_summary(summary: dict) -> None:
    print(
        "iterations={iterations} learned={learned} failed={failed} "
        "uninteresting={uninteresting} codegen_failed={codegen_failed} "
        "aborted={aborted}".format(**summary)
    )


def cmd_run(args) -> int:
    config = _load(args)
    engine = start_run(config, args.run_dir)
    _print_summary(engine.run(args.iterations))
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load(args)
    # Simulated learning: force the always-succeeding learner.
    config = replace(config, learner=replace(config.learner, kind="always_success"))
    engine = start_run(config, args.run_dir)
    _print_summary(engine.run(args.iterations))
    return EXIT_OK


def cmd_resume(args) -> int:
    engine = resume_run(args.run_dir)
    _print_summary(engine.run(args.iterations))
    return EXIT_OK


def cmd_metrics(args) -> int:
    run_dir = RunDir.open(args.run_dir)
    events = ev.read_events(run_dir.events_path)
    trace = met.trace_from_events(events)
    records = met.records_from_events(events)
    out_dir = run_dir.metrics_dir

    iters = [e.iteration for e in trace]
    met.write_series_csv(out_dir / "annecs.csv",
                         zip(iters, met.annecs(trace)), ("iteration", "value"))
    verdicts = None
    if args.requery:
        config = _load(args)
        gateway = Gateway(build_fm_backend(config), max_attempts=config.fm.max_attempts)
        verdicts = met.requery_verdicts(
            records, gateway,
            robot_desc=config.robot_desc,
            model_name=config.models.moi.name,
            temperature=config.models.moi.temperature,
            moi_similar=config.moi_similar,
        )
    try:
        met.write_series_csv(out_dir / "annecs_omni.csv",
                             zip(iters, met.annecs_omni(trace, verdicts)),
                             ("iteration", "value"))
    except met.MetricsError as exc:
        print(f"annecs_omni skipped: {exc}", file=sys.stderr)
    met.write_series_csv(
        out_dir / "percent_learned.csv",
        enumerate(met.percent_learned(trace), start=1),
        ("attempted_task", "value"),
    )

    def archive_embeddings(event_list):
        recs = met.records_from_events(event_list)
        if args.pool_only:
            recs = [r for r in recs if r.status in (Status.SEED, Status.LEARNED, Status.FAILED)]
        return [r.embedding for r in recs]

    archives = [archive_embeddings(events)]
    labels = [str(args.run_dir)]
    for other in args.compare or []:
        other_dir = RunDir.open(other)
        archives.append(archive_embeddings(ev.read_events(other_dir.events_path)))
        labels.append(str(other))
    rows = []
    for level in args.coverage_levels:
        for label, count in zip(labels, met.cell_coverage(archives, level)):
            rows.append((level, label, count))
    met.write_series_csv(out_dir / "coverage.csv", rows, ("level", "archive", "count"))
    print(f"metrics written to {out_dir}")
    return EXIT_OK


def cmd_export_graph(args) -> int:
    run_dir = RunDir.open(args.run_dir)
    records = met.records_from_events(ev.read_events(run_dir.events_path))
    graph = met.export_graph(records, closest_parent_only=not args.all_parents)
    out = Path(args.out) if args.out else run_dir.metrics_dir / "graph.json"
    met.write_graph_json(out, graph)
    print(f"graph written to {out} ({len(graph['nodes'])} nodes, {len(graph['edges'])} edges)")
    return EXIT_OK


def cmd_validate_env(args) -> int:
    config = _load(args)
    sandbox = build_sandbox(config)
    env_code = Path(args.env_file).read_text(encoding="utf-8")
    outcome = run_checks(sandbox, env_code, config.sandbox.smoke_steps, config.rng_seed)
    report = {
        "ok": outcome.ok,
        "failed_op": outcome.failed_op,
        "steps": [
            {"op": op, **verdict.to_payload()}
            for op, verdict in outcome.steps
        ],
    }
    print(json.dumps(report, indent=2))
    if hasattr(sandbox, "close"):
        sandbox.close()
    return EXIT_OK if outcome.ok else EXIT_RUN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="openloop",
        description="Open-ended task generation loop: generate, gate, learn, archive.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True, needs_run_dir=True, needs_iters=True):
        if needs_config:
            p.add_argument("--config", help="YAML run config (defaults apply when omitted)")
        if needs_run_dir:
            p.add_argument("--run-dir", required=True, help="run directory")
        if needs_iters:
            p.add_argument("--iterations", type=int, default=10)

    p = sub.add_parser("run", help="run the loop with the configured learner")
    add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="run with the always-succeeding learner")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("resume", help="replay a run's event log and continue")
    add_common(p, needs_config=False)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("metrics", help="write metric CSV files for a run")
    add_common(p, needs_iters=False)
    p.add_argument("--coverage-levels", type=int, nargs="+",
                   default=list(met.DEFAULT_COVERAGE_LEVELS))
    p.add_argument("--compare", nargs="*", help="other run directories for joint coverage")
    p.add_argument("--pool-only", action="store_true",
                   help="restrict coverage to seed/learned/failed tasks")
    p.add_argument("--requery", action="store_true",
                   help="re-judge interestingness with the configured backend "
                        "instead of using stored gate verdicts")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("export-graph", help="write the task lineage graph JSON")
    add_common(p, needs_config=False, needs_iters=False)
    p.add_argument("--all-parents", action="store_true",
                   help="keep every parent edge instead of only the closest")
    p.add_argument("--out", help="output path (default: <run>/metrics/graph.json)")
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("validate-env", help="send one env file through the sandbox")
    p.add_argument("--config", help="YAML run config (defaults apply when omitted)")
    p.add_argument("env_file")
    p.set_defaults(func=cmd_validate_env)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ev.CorruptLogError as exc:
        print(f"corrupt event log: {exc}", file=sys.stderr)
        return EXIT_RESUME_CORRUPT
    except (EngineError, RunDirError, met.MetricsError, OSError) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
