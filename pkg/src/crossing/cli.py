"""Command-line entry points: simulate, analyze, verify, serve, replay."""

from __future__ import annotations

import argparse
import json
import multiprocessing
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, SessionConfig, config_from_dict, config_to_dict, load_config
from .logs import SCHEMA_VERSION, LogValidationError


def _session_name(index: int) -> str:
    return f"session_{index:03d}"


def _run_one_session(args: tuple[dict, int, bool, str]) -> str:
    config_data, seed, aware_first, log_path = args
    from .orchestrator import run_session

    cfg = config_from_dict(config_data)
    cfg = replace(cfg, seed=seed, aware_first=aware_first)
    run_session(cfg, log_path)
    return log_path


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config) if args.config else SessionConfig()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_data = config_to_dict(cfg)

    jobs = []
    manifest_sessions = []
    for i in range(args.sessions):
        seed = args.seed + i
        aware_first = i % 2 == 1  # alternating counterbalance across the batch
        name = _session_name(i)
        log_path = out_dir / f"{name}.jsonl"
        jobs.append((config_data, seed, aware_first, str(log_path)))
        manifest_sessions.append(
            {
                "name": name,
                "seed": seed,
                "aware_first": aware_first,
                "log": log_path.name,
            }
        )

    workers = args.workers or min(args.sessions, multiprocessing.cpu_count())
    if workers > 1 and args.sessions > 1:
        with multiprocessing.get_context("spawn").Pool(workers) as pool:
            for path in pool.imap_unordered(_run_one_session, jobs):
                print(f"completed {path}")
    else:
        for job in jobs:
            print(f"completed {_run_one_session(job)}")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "n_sessions": args.sessions,
        "base_seed": args.seed,
        "aware_first_rule": "alternating, session 0 unaware-first",
        "sessions": manifest_sessions,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {out_dir / 'manifest.json'}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    from .analytics import build_report, format_report_text, load_session

    log_dir = Path(args.logs)
    paths = sorted(p for p in log_dir.glob("*.jsonl") if not p.name.endswith(".times"))
    if not paths:
        print(f"error: no .jsonl logs in {log_dir}", file=sys.stderr)
        return 2
    sessions = []
    for path in paths:
        try:
            sessions.append(load_session(path))
        except (LogValidationError, KeyError, ValueError) as exc:
            print(f"warning: skipping malformed log {path}: {exc}", file=sys.stderr)
    if not sessions:
        print("error: all logs were malformed", file=sys.stderr)
        return 2
    report = build_report(sessions)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(format_report_text(report))
    print(f"report written to {report_path}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    from .verification import run_all_checks

    results = run_all_checks(fast=args.fast)
    failed = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {result.detail} ({result.seconds:.1f}s)")
        if not result.passed:
            failed += 1
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    try:
        cfg = load_config(args.config) if args.config else SessionConfig()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    app = create_app(
        cfg,
        tracks_dir=Path(args.tracks) if args.tracks else None,
        log_dir=Path(args.out),
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    from .replay import replay_log

    try:
        report = replay_log(args.log)
    except (LogValidationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if report.ok:
        print(
            f"replay ok: {report.trials_compared} trials reproduced with zero divergences"
        )
        return 0
    print(f"replay diverged: {report.divergence.description}", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossing",
        description="Two-vehicle intersection experiment: simulate, analyze, serve, replay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run synthetic sessions")
    p.add_argument("--config", help="session config JSON (defaults built in)")
    p.add_argument("--sessions", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="base seed; session i uses seed+i")
    p.add_argument("--out", required=True, help="output directory for logs")
    p.add_argument("--workers", type=int, default=0, help="parallel sessions (0 = auto)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="build the analysis report from logs")
    p.add_argument("--logs", required=True, help="directory of session logs")
    p.add_argument("--report", required=True, help="output JSON report path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="run the built-in oracle suite")
    p.add_argument("--fast", action="store_true", help="reduced sample sizes")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("serve", help="serve live sessions over WebSocket")
    p.add_argument("--config", help="session config JSON")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--tracks", help="directory with track files and manifest")
    p.add_argument("--out", default="live_logs", help="log directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="re-execute a log and check for divergence")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
