"""Command-line entry points: run experiments, run checks, emit problems."""

from __future__ import annotations

import argparse
import sys

from .harness import parse_config_file, run_checks, run_experiment
from .problems import gen_bilinear, gen_scsc_quadratic, save_problem


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rainopt",
        description="Recursive-anchoring minimax solvers: experiment runner and validators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment described by a config file")
    p_run.add_argument("config", help="path to a key = value config file")
    p_run.add_argument("--output", default=None, help="override the output CSV path")

    p_check = sub.add_parser("check", help="run a validator sweep")
    p_check.add_argument("suite", choices=["lemmas", "oracle", "schedule", "all"])
    p_check.add_argument("--seed", type=int, default=0)

    p_gen = sub.add_parser("gen", help="generate a problem instance file")
    p_gen.add_argument("--family", choices=["scsc", "bilinear"], required=True)
    p_gen.add_argument("--d-x", type=int, required=True, dest="d_x")
    p_gen.add_argument("--d-y", type=int, required=True, dest="d_y")
    p_gen.add_argument("--mu", type=float, default=0.0)
    p_gen.add_argument("--smoothness", "-L", type=float, required=True, dest="L")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", required=True)

    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            cfg = parse_config_file(args.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if args.output is not None:
            cfg.output = args.output
        try:
            result = run_experiment(cfg)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        mean_grad = result.summary["grad_norm_final"]["mean"]
        mean_sfo = result.summary["sfo_total"]["mean"]
        print(f"run {result.run_id}: {len(result.rows)} replications -> {result.csv_path}")
        print(f"mean grad norm {mean_grad:.6g}, mean oracle calls {mean_sfo:.6g}")
        return 0

    if args.command == "check":
        return run_checks(args.suite, args.seed)

    if args.command == "gen":
        try:
            if args.family == "scsc":
                problem = gen_scsc_quadratic(args.d_x, args.d_y, args.mu, args.L, args.seed)
            else:
                problem = gen_bilinear(args.d_x, args.d_y, args.L, args.seed)
            save_problem(problem, args.out)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {args.family} problem (d_x={args.d_x}, d_y={args.d_y}) to {args.out}")
        return 0

    return 2  # pragma: no cover


if __name__ == "__main__":
    raise SystemExit(main())
