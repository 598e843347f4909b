"""Command-line entry points: run, replay, report, serve."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import VahrError
from .gateway import serve_session
from .metrics import DegenerateGroups, MetricsReport, anova_one_way
from .runner import (
    CSV_COLUMNS,
    RunReport,
    export_report,
    replay_frames,
    replay_log,
    run,
)
from .scenario import Scenario, bundled_path, load_scenario


def _load_scenario_arg(path: str | None) -> Scenario:
    return load_scenario(path if path else bundled_path("tasks_full.json"))


def _parse_bind(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise VahrError(f"bind address must be host:port, got {addr!r}")
    return host, int(port)


def cmd_run(args: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(args.scenario)
    mode = (args.operator or scenario.operator.mode).replace("-", "_")
    if mode == "live":
        bind = _parse_bind(args.bind)
        results = serve_session(scenario, bind, seed=args.seed, pace=args.pace,
                                out_dir=args.out, sessions=1,
                                on_ready=lambda a: print(f"listening on {a[0]}:{a[1]}",
                                                         flush=True))
        if not results:
            print("session abandoned", file=sys.stderr)
            return 1
        report = results[0].report
    else:
        from .runner import SimRun, scripted_operator_policy
        sim = SimRun(scenario, args.seed, mode)
        report = sim.execute(scripted_operator_policy(mode, sim), pace=args.pace)
        if args.out:
            report.save(Path(args.out) / f"{scenario.name}-{mode}-seed{args.seed}")
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    return 0 if report.completed else 1


def cmd_replay(args: argparse.Namespace) -> int:
    if args.frames:
        if not args.scenario and not args.seed_given:
            print("--frames replay needs --scenario and --seed", file=sys.stderr)
        scenario = _load_scenario_arg(args.scenario)
        frames = [json.loads(line) for line in
                  Path(args.frames).read_text(encoding="utf-8").splitlines() if line.strip()]
        report = replay_frames(scenario, args.seed, frames)
        metrics = report.metrics
        sibling = Path(args.frames).parent / "report.json"
    else:
        if not args.log:
            print("replay needs --log or --frames", file=sys.stderr)
            return 2
        metrics = replay_log(args.log)
        sibling = Path(args.log).parent / "report.json"

    print(json.dumps(metrics.to_json_dict(), indent=2, sort_keys=True))
    if sibling.exists():
        stored = MetricsReport.from_json_dict(
            json.loads(sibling.read_text(encoding="utf-8"))["metrics"])
        if stored.to_json_dict() == metrics.to_json_dict():
            print("replay matches stored report", file=sys.stderr)
            return 0
        print("replay DIFFERS from stored report", file=sys.stderr)
        return 1
    return 0


def load_report_json(path: str | Path) -> RunReport:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunReport(
        scenario_name=data["scenario_name"],
        scenario_hash=data["scenario_hash"],
        seed=data["seed"],
        method=data["method"],
        metrics=MetricsReport.from_json_dict(data["metrics"]),
        outcomes=[],
        logical_ms=data["logical_ms"],
        wall_s=data["wall_s"],
        log_sha256=data["log_sha256"],
        shadow_requests=data["shadow_requests"],
        timed_out=data["timed_out"],
        completed=data.get("completed", True),
    )


def _comparison_rows(reports: list[RunReport]) -> list[dict]:
    by_method: dict[str, list[RunReport]] = {}
    for rep in reports:
        by_method.setdefault(rep.method, []).append(rep)
    if len(by_method) != 2:
        raise VahrError(f"--compare needs exactly two methods, found {sorted(by_method)}")
    (m_a, group_a), (m_b, group_b) = sorted(by_method.items())
    rows = []
    for metric in ("ie_s", "nt_s", "rad", "fo_s", "total_task_time_s", "solved_puzzle_parts"):
        va = [getattr(r.metrics, metric) for r in group_a]
        vb = [getattr(r.metrics, metric) for r in group_b]
        if any(v is None for v in va + vb):
            continue
        try:
            f_stat, p = anova_one_way(va, vb)
        except DegenerateGroups:  # fewer than 2 runs in a group: means only
            f_stat = p = None
        rows.append({
            "metric": metric,
            f"mean_{m_a}": sum(va) / len(va),
            f"mean_{m_b}": sum(vb) / len(vb),
            "f_stat": f_stat,
            "p_value": p,
        })
    return rows


def cmd_report(args: argparse.Namespace) -> int:
    reports = [load_report_json(p) for p in sorted(Path(args.indir).rglob("report.json"))]
    if not reports:
        print(f"no report.json under {args.indir}", file=sys.stderr)
        return 1
    reports.sort(key=lambda r: (r.method, r.seed))
    text = export_report(reports, fmt=args.format)
    print(text, end="" if text.endswith("\n") else "\n")
    if args.compare:
        rows = _comparison_rows(reports)
        if args.format == "json":
            print(json.dumps(rows, indent=2, sort_keys=True))
        else:
            cols = list(rows[0].keys()) if rows else []
            print()
            print(",".join(cols))
            for row in rows:
                print(",".join(str(row[c]) for c in cols))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    scenario = _load_scenario_arg(args.scenario)
    bind = _parse_bind(args.bind)
    sessions = None if args.sessions == 0 else args.sessions
    serve_session(scenario, bind, seed=args.seed, pace=args.pace,
                  out_dir=args.out, sessions=sessions,
                  on_ready=lambda a: print(f"listening on {a[0]}:{a[1]}", flush=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vahr",
                                     description="assistant-mediated multi-robot runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario")
    p_run.add_argument("--scenario", help="scenario JSON (default: bundled tasks_full)")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--operator",
                       choices=["scripted-vahr", "scripted-keyboard", "live"])
    p_run.add_argument("--pace", choices=["fast", "real"], default="fast")
    p_run.add_argument("--out", help="directory for events.jsonl and report.json")
    p_run.add_argument("--bind", default="127.0.0.1:8765", help="for --operator live")
    p_run.set_defaults(func=cmd_run)

    p_replay = sub.add_parser("replay", help="recompute metrics from a persisted log")
    p_replay.add_argument("--log", help="events.jsonl to recompute")
    p_replay.add_argument("--frames", help="frames.jsonl to re-simulate")
    p_replay.add_argument("--scenario", help="scenario for --frames replay")
    p_replay.add_argument("--seed", type=int, default=0)
    p_replay.set_defaults(func=cmd_replay, seed_given=True)

    p_report = sub.add_parser("report", help="tabulate saved run reports")
    p_report.add_argument("--in", dest="indir", required=True)
    p_report.add_argument("--compare", action="store_true",
                          help="append per-metric method comparison with ANOVA")
    p_report.add_argument("--format", choices=["csv", "json"], default="csv")
    p_report.set_defaults(func=cmd_report)

    p_serve = sub.add_parser("serve", help="serve live console sessions")
    p_serve.add_argument("--scenario")
    p_serve.add_argument("--bind", default="127.0.0.1:8765")
    p_serve.add_argument("--seed", type=int, default=0)
    p_serve.add_argument("--pace", choices=["fast", "real"], default="real")
    p_serve.add_argument("--out")
    p_serve.add_argument("--sessions", type=int, default=0,
                         help="number of sessions to serve; 0 = forever")
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VahrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
