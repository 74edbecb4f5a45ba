"""Command-line entry points: single runs, full sweeps, and table aggregation."""

import argparse
import sys

from .harness import (aggregate_records, parse_config, read_runs_csv,
                      run_filter_trajectory, run_sweep)


def _add_run(subparsers):
    p = subparsers.add_parser("run", help="run a single (method, N, seed) cell")
    p.add_argument("--config", required=True)
    p.add_argument("--method", help="filter name (default: first configured)")
    p.add_argument("--particles", type=int, help="ensemble size (default: first configured)")
    p.add_argument("--seed", type=int, help="seed (default: first configured)")


def _add_sweep(subparsers):
    p = subparsers.add_parser("sweep", help="run the full methods x N x seeds grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory for runs.csv / aggregate.csv")
    p.add_argument("--workers", type=int, default=None)


def _add_table(subparsers):
    p = subparsers.add_parser("table", help="print the aggregate table for a sweep directory")
    p.add_argument("--in", dest="in_dir", required=True)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="engmf-lab",
                                     description="EnGMF / AEnGMF twin-experiment harness")
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_run(subparsers)
    _add_sweep(subparsers)
    _add_table(subparsers)
    args = parser.parse_args(argv)

    if args.command == "run":
        cfg = parse_config(args.config)
        method = args.method or next(iter(cfg.filters))
        n = args.particles or cfg.particles[0]
        seed = args.seed if args.seed is not None else cfg.seeds[0]
        rec = run_filter_trajectory(cfg, method, n, seed)
        print("method=%s N=%d seed=%d" % (rec.method, rec.n_particles, rec.seed))
        print("rmse=%s diverged=%s wall_time=%.2fs"
              % ("nan" if rec.rmse is None else repr(rec.rmse), rec.diverged, rec.wall_time))
        if rec.theta_summary:
            print("mean fitted parameters: "
                  + " ".join("%s=%.6g" % kv for kv in sorted(rec.theta_summary.items())))
        return 1 if rec.diverged else 0

    if args.command == "sweep":
        cfg = parse_config(args.config)
        runs_path, agg_path = run_sweep(cfg, args.out, workers=args.workers)
        print("wrote %s" % runs_path)
        print("wrote %s" % agg_path)
        return 0

    records = read_runs_csv("%s/runs.csv" % args.in_dir)
    for row in aggregate_records(records):
        print(",".join(row))
    return 0


if __name__ == "__main__":
    sys.exit(main())
