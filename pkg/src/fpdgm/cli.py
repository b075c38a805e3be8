"""
Command-line interface: solve one instance, run a sweep, run the
validation suite, or evaluate the a-priori iteration bounds.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

from . import bench, validate
from .core import BoundParams, Tolerances, write_trace_csv
from .solver import iteration_bounds, stop_bound_terms

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ITERATION_CAP = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_CHECK_FAILED = 4

_STATUS_EXIT = {
    "converged": EXIT_OK,
    "iteration-cap": EXIT_ITERATION_CAP,
    "numerical-failure": EXIT_NUMERICAL_FAILURE,
}


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="fpdgm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one instance")
    p_solve.add_argument("--config", help="JSON instance file")
    p_solve.add_argument("--family", choices=["elp", "rot", "ropt"])
    p_solve.add_argument("--p", type=int)
    p_solve.add_argument("--n", type=int)
    p_solve.add_argument("--m1", type=int, default=2, help="equality rows (elp)")
    p_solve.add_argument("--gamma", type=float, default=0.1)
    p_solve.add_argument("--cost", default="grid", help="grid, random, or a file path")
    p_solve.add_argument("--mass-fraction", type=float, default=0.5)
    p_solve.add_argument("--solver", default="fpdgm")
    p_solve.add_argument("--eps-rel", type=float, default=0.01)
    p_solve.add_argument("--eps-rel-g", type=float)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--max-iter", type=int)
    p_solve.add_argument("--out", default="trace.csv")
    p_solve.add_argument("--timings", action="store_true",
                         help="record wall times in the trace file")

    p_sweep = sub.add_parser("sweep", help="run an experiment grid")
    p_sweep.add_argument("--config", required=True, help="JSON sweep config")
    p_sweep.add_argument("--out")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--timings", action="store_true")

    p_val = sub.add_parser("validate", help="run the built-in checks")
    p_val.add_argument("--check", action="append",
                       help="run only this check (repeatable): "
                            + ", ".join(validate.CHECKS))
    p_val.add_argument("--out", help="write per-check results CSV")

    p_bounds = sub.add_parser("bounds", help="a-priori iteration bounds")
    p_bounds.add_argument("--lipschitz", "--L", type=float, dest="lipschitz")
    p_bounds.add_argument("--r1", type=float, default=0.0)
    p_bounds.add_argument("--r2", type=float, default=0.0)
    p_bounds.add_argument("--eps-f-tilde", type=float)
    p_bounds.add_argument("--eps-eq-tilde", type=float)
    p_bounds.add_argument("--eps-in-tilde", type=float)
    p_bounds.add_argument("--eps-f", type=float)
    p_bounds.add_argument("--eps-eq", type=float)
    p_bounds.add_argument("--eps-in", type=float)
    p_bounds.add_argument("--config", help="derive the Lipschitz constant "
                                           "from a JSON instance file")
    return parser


def _instance_from_args(args):
    if args.config:
        return bench.load_instance(args.config)
    if not args.family:
        raise ValueError("either --config or --family is required")
    if args.family == "elp":
        if args.n is None:
            raise ValueError("--family elp requires --n")
        return bench.random_elp_instance(args.n, args.m1, args.seed)
    if args.p is not None:
        p = args.p
    elif args.n is not None:
        p = math.isqrt(args.n)
        if p * p != args.n:
            raise ValueError(f"n={args.n} is not a perfect square")
    else:
        raise ValueError(f"--family {args.family} requires --p or --n")
    if args.family == "rot":
        return bench.random_rot_instance(p, args.gamma, args.seed, cost=args.cost)
    return bench.random_ropt_instance(p, args.gamma, args.seed, cost=args.cost,
                                      mass_fraction=args.mass_fraction)


def cmd_solve(args) -> int:
    if args.solver not in bench.SOLVER_IDS:
        print(f"fpdgm: unknown solver id {args.solver!r} "
              f"(expected one of {', '.join(bench.SOLVER_IDS)})", file=sys.stderr)
        return EXIT_USAGE
    try:
        oracle = _instance_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"fpdgm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    eps_rel_g = args.eps_rel_g if args.eps_rel_g is not None else args.eps_rel
    tol = bench.relative_tolerances(oracle, args.eps_rel, eps_rel_g)
    report = bench.run_solver(args.solver, oracle, tol, max_iter=args.max_iter)
    print(f"solver={args.solver} status={report.status} "
          f"iterations={report.iterations}")
    print(f"gap={report.final_gap:.6e} eq_res={report.final_eq_residual:.6e} "
          f"in_res={report.final_in_residual:.6e}")
    if args.out:
        write_trace_csv(report.trace, args.out, include_timings=args.timings)
        print(f"trace written to {args.out}")
    return _STATUS_EXIT.get(report.status, EXIT_NUMERICAL_FAILURE)


def cmd_sweep(args) -> int:
    try:
        config, cfg_out = bench.sweep_config_from_file(args.config)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"fpdgm: bad sweep config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    records = bench.run_sweep(config, jobs=args.jobs)
    out = args.out or cfg_out or "sweep_results.csv"
    bench.write_records_csv(records, out, include_timings=args.timings)
    plots = bench.write_plot_data(records, config, Path(out).with_suffix(""))
    print(f"{len(records)} records written to {out}")
    for path in plots:
        print(f"plot data written to {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        results = validate.run_validation(args.check)
    except ValueError as exc:
        print(f"fpdgm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'} {res.name}: {res.detail}")
    if args.out:
        validate.write_results_csv(results, args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def cmd_bounds(args) -> int:
    lipschitz = args.lipschitz
    if lipschitz is None and args.config:
        try:
            lipschitz = bench.load_instance(args.config).lipschitz
        except (ValueError, OSError) as exc:
            print(f"fpdgm: {exc}", file=sys.stderr)
            return EXIT_USAGE
    if lipschitz is None or (args.r1 == 0 and args.r2 == 0):
        print("fpdgm: bounds needs --lipschitz (or --config) and r1/r2",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        bounds = BoundParams(r1=args.r1, r2=args.r2, lipschitz=lipschitz)
        if args.eps_f_tilde is not None:
            tol = Tolerances(eps_f_tilde=args.eps_f_tilde,
                             eps_eq_tilde=args.eps_eq_tilde,
                             eps_in_tilde=args.eps_in_tilde,
                             eps_f=args.eps_f, eps_eq=args.eps_eq, eps_in=args.eps_in)
        elif args.eps_f is not None:
            tol = Tolerances.from_targets(args.eps_f, args.eps_eq, args.eps_in, bounds)
        else:
            print("fpdgm: bounds needs stopping thresholds (--eps-f-tilde ...) "
                  "or target accuracies (--eps-f ...)", file=sys.stderr)
            return EXIT_USAGE
    except ValueError as exc:
        print(f"fpdgm: {exc}", file=sys.stderr)
        return EXIT_USAGE

    def show(v):
        return "omitted" if v is None else repr(v)

    print(f"thresholds: eps_f_tilde={show(tol.eps_f_tilde)} "
          f"eps_eq_tilde={show(tol.eps_eq_tilde)} eps_in_tilde={show(tol.eps_in_tilde)}")
    terms = stop_bound_terms(bounds, tol)
    labels = ["f"]
    if bounds.r1 > 0 and tol.eps_eq_tilde is not None:
        labels.append("eq")
    if bounds.r2 > 0 and tol.eps_in_tilde is not None:
        labels.append("in")
    parts = [f"{lbl}={t!r}" for lbl, t in zip(labels, terms)]
    for lbl in ("eq", "in"):
        if lbl not in labels:
            parts.append(f"{lbl}=omitted")
    print("terms: " + " ".join(parts))
    n_stop, n_sol = iteration_bounds(bounds, tol)
    print(f"N_stop={n_stop}")
    print(f"N={n_sol if n_sol is not None else 'unavailable (no target accuracies)'}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FPDGM_LOG", "WARNING").upper())
    args = _build_parser().parse_args(argv)
    handler = {"solve": cmd_solve, "sweep": cmd_sweep,
               "validate": cmd_validate, "bounds": cmd_bounds}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
