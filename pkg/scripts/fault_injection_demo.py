#!/usr/bin/env python3
"""Show how the sequential-delivery LED reacts to injected faults.

Runs task III nominally, with the delivery order reversed, and with the
initiator sent to the wrong zone, printing the LED state and task rate for
each variant.

Usage: python scripts/fault_injection_demo.py [--seed 0]
"""
from __future__ import annotations

import argparse
import dataclasses

from vahr.runner import run
from vahr.scenario import Faults, bundled_scenario


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    base = bundled_scenario()
    variants = {
        "nominal": base,
        "reversed order": dataclasses.replace(base, faults=Faults(task3_reverse_order=True)),
        "wrong zone (C)": dataclasses.replace(base, faults=Faults(task3_initiator_zone="C")),
    }
    print(f"{'variant':18s} {'led':>6s} {'task rate':>10s}")
    for name, scenario in variants.items():
        report = run(scenario, args.seed, "scripted_vahr")
        outcome = [o for o in report.outcomes if o.name == "III"][0]
        print(f"{name:18s} {str(outcome.led):>6s} {report.metrics.task_success_rate:10.3f}")


if __name__ == "__main__":
    main()
