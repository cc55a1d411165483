"""bench command line: gen, run, breakpoint, oracle-check."""

from __future__ import annotations

import argparse
import logging
import os
import random
import sys

from .breakpoint import breakpoint_search, make_trial_probe
from .drivers import run_active, run_passive, run_virtual, staged_result_set
from .scenario import ScenarioConfig, generate_scenario, load_traces, write_traces
from . import report


def _cmd_gen(args) -> int:
    config = ScenarioConfig(
        seed=args.seed,
        case=args.case,
        user_count=args.users,
        report_rate_per_sec=args.rate,
        duration_s=args.duration,
        period_ms=args.period_ms,
    )
    bundle = generate_scenario(config)
    write_traces(bundle, args.out)
    print(f"wrote {len(bundle.locations)} location records, "
          f"{len(bundle.reports)} reports, {len(bundle.shelters)} shelters -> {args.out}")
    return 0


def _cmd_run(args) -> int:
    bundle = load_traces(args.traces)
    if args.mode == "active":
        metrics = run_active(bundle, history_reports=args.history,
                             compress=args.compress)
    else:
        metrics = run_passive(bundle, args.pollers, history_reports=args.history,
                              compress=args.compress)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"ticks-{args.mode}.csv")
    png_path = os.path.join(args.out, f"ticks-{args.mode}.png")
    report.write_ticks_csv(csv_path, metrics)
    report.plot_ticks(png_path, metrics, title=f"{args.mode} mode")
    status = "OVERLOADED" if metrics.overloaded else "stable"
    print(f"{args.mode}: {len(metrics.ticks)} ticks, max tE {metrics.max_te:.1f} ms, "
          f"max tF {metrics.max_tf:.1f} ms, mean results/tick "
          f"{metrics.mean_result_count:.1f} [{status}]")
    print(f"wrote {csv_path} and {png_path}")
    return 0


def _cmd_breakpoint(args) -> int:
    rows = []
    for rate in args.rate:
        probe = make_trial_probe(
            args.mode, rate, seed=args.seed, case=args.case,
            period_ms=args.period_ms, trial_ticks=args.ticks,
            pollers=args.pollers, compress=args.compress,
            history_reports=args.history,
        )
        result = breakpoint_search(probe, report_rate=rate, start=args.start,
                                   cap=args.cap, resolution=args.resolution)
        rows.append((rate, args.mode, result))
        capped = " (cap reached)" if result.capped else ""
        print(f"rate {rate}/s -> max supportable {result.max_supportable}{capped}")
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"breakpoints-{args.mode}.csv")
    png_path = os.path.join(args.out, f"breakpoints-{args.mode}.png")
    report.write_breakpoints_csv(csv_path, rows)
    report.plot_breakpoints(png_path, rows)
    print(f"wrote {csv_path} and {png_path}")
    return 0


def _cmd_oracle_check(args) -> int:
    rng = random.Random(args.seed)
    failures = 0
    for i in range(args.instances):
        config = ScenarioConfig(
            seed=rng.randrange(1 << 30),
            case=rng.choice([1, 2, 3, 4]),
            user_count=rng.randint(5, args.max_users),
            report_rate_per_sec=rng.uniform(0.2, 2.0),
            duration_s=30.0,
            period_ms=10_000,
            shelters_per_city=rng.randint(5, args.max_shelters),
        )
        bundle = generate_scenario(config)
        run = run_virtual(bundle, capture_oracle=True)
        try:
            got = staged_result_set(run.engine)
            expected = run.oracle_union
            if got != expected:
                failures += 1
                print(f"instance {i}: MISMATCH engine={len(got)} oracle={len(expected)}")
            elif args.verbose:
                print(f"instance {i}: ok ({len(got)} results)")
        finally:
            run.close()
    if failures:
        print(f"FAIL: {failures}/{args.instances} instances diverged")
        return 1
    print(f"PASS: {args.instances} instances, engine == brute-force oracle")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("BEACON_LOG", "WARNING"))
    parser = argparse.ArgumentParser(prog="bench",
                                     description="workload bench for the active engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate deterministic workload traces")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--case", type=int, default=1, choices=[1, 2, 3, 4])
    p.add_argument("--users", type=int, default=30)
    p.add_argument("--rate", type=float, default=1.0, help="reports per second")
    p.add_argument("--duration", type=float, default=60.0, help="seconds")
    p.add_argument("--period-ms", type=int, default=10_000)
    p.add_argument("--out", default="bench-out/traces")
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("run", help="replay traces against a live engine")
    p.add_argument("--traces", default="bench-out/traces")
    p.add_argument("--mode", choices=["active", "passive"], required=True)
    p.add_argument("--pollers", type=int, default=1)
    p.add_argument("--history", type=int, default=20_000)
    p.add_argument("--compress", type=float, default=1.0,
                   help="time compression factor (2 = run twice as fast)")
    p.add_argument("--out", default="bench-out")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("breakpoint", help="search max supportable subscribers")
    p.add_argument("--mode", choices=["active", "passive"], required=True)
    p.add_argument("--rate", type=float, nargs="+", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--case", type=int, default=1, choices=[1, 2, 3, 4])
    p.add_argument("--period-ms", type=int, default=2_000)
    p.add_argument("--ticks", type=int, default=6, help="trial length in periods")
    p.add_argument("--pollers", type=int, default=1)
    p.add_argument("--compress", type=float, default=1.0)
    p.add_argument("--history", type=int, default=2_000)
    p.add_argument("--start", type=int, default=1)
    p.add_argument("--cap", type=int, default=4096)
    p.add_argument("--resolution", type=int, default=1)
    p.add_argument("--out", default="bench-out")
    p.set_defaults(fn=_cmd_breakpoint)

    p = sub.add_parser("oracle-check", help="random instances vs the brute-force oracle")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--max-users", type=int, default=60)
    p.add_argument("--max-shelters", type=int, default=40)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=_cmd_oracle_check)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
