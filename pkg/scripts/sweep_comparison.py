#!/usr/bin/env python3
"""Seed sweep comparing the assistant-mediated and keyboard operator models.

Runs the bundled three-task scenario under both scripted operators for a
range of seeds, prints the per-run table, and compares the methods with a
one-way ANOVA per metric.

Usage: python scripts/sweep_comparison.py [--seeds 20] [--out sweep_out/]
"""
from __future__ import annotations

import argparse
from pathlib import Path

from vahr.metrics import anova_one_way
from vahr.runner import export_report, run
from vahr.scenario import bundled_scenario, load_scenario


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--scenario", help="scenario JSON (default: bundled tasks_full)")
    parser.add_argument("--out", help="directory to save per-run logs and reports")
    args = parser.parse_args()

    scenario = load_scenario(args.scenario) if args.scenario else bundled_scenario()
    reports = []
    for mode in ("scripted_vahr", "scripted_keyboard"):
        for seed in range(args.seeds):
            report = run(scenario, seed, mode)
            reports.append(report)
            if args.out:
                report.save(Path(args.out) / f"{mode}-seed{seed:03d}")

    print(export_report(reports, fmt="csv"))

    by_mode = {"scripted_vahr": [], "scripted_keyboard": []}
    for rep in reports:
        by_mode[rep.method].append(rep.metrics)

    print("method means and one-way ANOVA")
    print(f"{'metric':22s} {'vahr':>10s} {'keyboard':>10s} {'F':>10s} {'p':>12s}")
    for metric in ("ie_s", "nt_s", "rad", "fo_s", "total_task_time_s",
                   "solved_puzzle_parts"):
        vahr_vals = [getattr(m, metric) for m in by_mode["scripted_vahr"]]
        kb_vals = [getattr(m, metric) for m in by_mode["scripted_keyboard"]]
        f_stat, p = anova_one_way(vahr_vals, kb_vals)
        mean_v = sum(vahr_vals) / len(vahr_vals)
        mean_k = sum(kb_vals) / len(kb_vals)
        print(f"{metric:22s} {mean_v:10.2f} {mean_k:10.2f} {f_stat:10.2f} {p:12.3e}")


if __name__ == "__main__":
    main()
