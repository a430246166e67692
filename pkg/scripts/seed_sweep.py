#!/usr/bin/env python3
"""Sweep a scenario across many seeds and report aggregate statistics.

Keys stay fixed across the sweep (only the run seed changes), so every
run exercises the same cluster under different timing and loss draws.
"""

import argparse
import pathlib
import statistics
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from mokka import simnet  # noqa: E402
from mokka.scenario import load_scenario  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scenario", help="path to a scenario .yaml file")
    parser.add_argument("--seeds", type=int, default=100)
    parser.add_argument(
        "--drop", type=float, default=None,
        help="override the scenario's drop probability",
    )
    args = parser.parse_args()

    scenario = load_scenario(args.scenario)
    if args.drop is not None:
        from dataclasses import replace

        scenario = replace(scenario, drop_probability=args.drop)

    elections = []
    leader_changes = []
    failed_seeds = []
    started = time.perf_counter()
    for offset in range(args.seeds):
        seed = scenario.seed + offset
        _, report = simnet.run(scenario.with_seed(seed))
        elections.append(report.elections_started)
        leader_changes.append(
            sum(len(ns) for ns in report.leaders_per_term.values())
        )
        if report.violations:
            failed_seeds.append(seed)
    elapsed = time.perf_counter() - started

    print(f"scenario {scenario.name}: {args.seeds} seeds in {elapsed:.1f}s")
    print(
        f"  elections per run: min={min(elections)}"
        f" median={statistics.median(elections)} max={max(elections)}"
    )
    print(
        f"  leader changes per run: min={min(leader_changes)}"
        f" median={statistics.median(leader_changes)} max={max(leader_changes)}"
    )
    print(f"  violating seeds: {failed_seeds or 'none'}")
    return 1 if failed_seeds else 0


if __name__ == "__main__":
    sys.exit(main())
