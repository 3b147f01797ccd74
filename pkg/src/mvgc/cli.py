"""Command-line entry points.

``mvgc-bench`` drives a workload and writes the metrics report (JSON by
default, CSV with --format csv); --plot-dir additionally renders figures
from the same report.  Exit status: 0 on success, 1 if any sampling point
reported a violation, 2 on usage errors.

``mvgc-verify`` replays a schedule file against a named scenario and
prints the JSON verdict.

Setting MVGC_DEBUG_EVENTS=1 streams operation-level events to stderr as
tab-separated lines.
"""

import argparse
import os
import sys

from .bench import WorkloadSpec, run_bench
from .harness import dump_report, parse_schedule, replay_report
from .runtime import ThreadedRuntime


def _bench_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mvgc-bench",
        description="Versioned-store workload driver with space sampling.")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--ops", type=int, default=10000)
    p.add_argument("--update-ratio", type=float, default=0.5)
    p.add_argument("--snapshot-ratio", type=float, default=0.1)
    p.add_argument("--query-length", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("baseline", "reclaiming"),
                   default="reclaiming")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--sample-every", type=int, default=0,
                   help="take a space sample every N completed operations")
    p.add_argument("--cells", type=int, default=64)
    p.add_argument("--out", default="-",
                   help="output file ('-' for stdout)")
    p.add_argument("--plot-dir", default=None,
                   help="render figures from the report into this directory")
    return p


def bench_main(argv=None) -> int:
    args = _bench_parser().parse_args(argv)
    spec = WorkloadSpec(
        threads=args.threads, ops=args.ops,
        update_ratio=args.update_ratio, snapshot_ratio=args.snapshot_ratio,
        query_length=args.query_length, seed=args.seed, mode=args.mode,
        cells=args.cells,
    )
    try:
        spec.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    runtime = ThreadedRuntime()
    if os.environ.get("MVGC_DEBUG_EVENTS") == "1":
        runtime.sink = lambda ev: print(
            "\t".join(str(x) for x in ev), file=sys.stderr)

    report = run_bench(spec, sample_every=args.sample_every, runtime=runtime)
    text = report.to_json() if args.format == "json" else report.to_csv()
    if args.out == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.plot_dir:
        from .plots import render_report
        for path in render_report(report.as_dict(), args.plot_dir):
            print(f"wrote {path}", file=sys.stderr)
    if report.violations:
        for violation in report.violations:
            print(f"violation: {violation}", file=sys.stderr)
        return 1
    return 0


def _verify_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mvgc-verify",
        description="Replay a schedule file against a named scenario and "
                    "report pass/fail as JSON.")
    p.add_argument("schedule", nargs="?",
                   help="schedule file: first line 'seed <int>', then one "
                        "process index per line")
    p.add_argument("--scenario", default=None)
    p.add_argument("--list-scenarios", action="store_true")
    return p


def verify_main(argv=None) -> int:
    args = _verify_parser().parse_args(argv)
    from .scenarios import SCENARIOS, scenario

    if args.list_scenarios:
        for name in sorted(SCENARIOS):
            print(name)
        return 0
    if not args.schedule or not args.scenario:
        print("error: a schedule file and --scenario are required",
              file=sys.stderr)
        return 2
    try:
        scn = scenario(args.scenario)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    with open(args.schedule) as fh:
        sched = parse_schedule(fh.read())
    report = replay_report(scn.build, sched)
    print(dump_report(report))
    return 0 if report["pass"] else 1


if __name__ == "__main__":
    sys.exit(bench_main())
