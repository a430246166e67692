#!/usr/bin/env python3
"""Run every bundled scenario once and summarize the outcomes.

Exit status is nonzero if any scenario produces an invariant violation.
"""

import argparse
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from mokka import simnet  # noqa: E402
from mokka.scenario import load_scenario  # noqa: E402

SCENARIO_DIR = pathlib.Path(__file__).resolve().parent.parent / "scenarios"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--trace-dir", type=pathlib.Path, default=None,
        help="also dump one .trace file per scenario into this directory",
    )
    args = parser.parse_args()
    if args.trace_dir:
        args.trace_dir.mkdir(parents=True, exist_ok=True)

    failed = 0
    for path in sorted(SCENARIO_DIR.glob("*.yaml")):
        scenario = load_scenario(str(path))
        started = time.perf_counter()
        trace, report = simnet.run(scenario)
        elapsed = time.perf_counter() - started
        leaders = {t: ns for t, ns in sorted(report.leaders_per_term.items())}
        status = "ok" if not report.violations else "VIOLATIONS"
        print(
            f"{scenario.name:28s} {status:10s} "
            f"events={len(trace):5d} elections={report.elections_started:2d} "
            f"leaders={leaders} ({elapsed:.2f}s)"
        )
        for violation in report.violations:
            print(f"    {violation}")
            failed = 1
        if args.trace_dir:
            out = args.trace_dir / f"{scenario.name}.trace"
            out.write_text(simnet.trace_lines(trace))
    return failed


if __name__ == "__main__":
    sys.exit(main())
