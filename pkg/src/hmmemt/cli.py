"""Command-line entry points.

Subcommands: simulate, bench, stiffness, kernel-check.  Exit codes: 0 on
success, 1 on validation/configuration errors, 2 on numerical failures
(divergence, non-convergent initialization).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import (
    ComparisonError,
    ConfigurationError,
    DiagnosticError,
    DivergenceError,
    InitializationError,
    ParameterError,
    ShapeError,
    ValidationError,
)
from .runner import run_bench, run_kernel_check, run_simulate, run_stiffness
from .scenario import load_scenario

try:
    from tomllib import TOMLDecodeError
except ModuleNotFoundError:
    from tomli import TOMLDecodeError

_VALIDATION_ERRORS = (
    ValidationError,
    ParameterError,
    ConfigurationError,
    ShapeError,
    ComparisonError,
    TOMLDecodeError,
    FileNotFoundError,
)
_NUMERICAL_ERRORS = (DivergenceError, InitializationError, DiagnosticError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmmemt",
        description="Multiscale stiff-ODE simulation engine with a two-machine EMT testbed",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario in baseline or hmm mode")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--mode", required=True, choices=("baseline", "hmm"))
    sim.add_argument("--out", required=True)
    sim.add_argument("--anchor", choices=("window_end", "evaluation_point"), default=None)
    sim.add_argument("--decimate", type=int, default=None)

    bench = sub.add_parser("bench", help="baseline vs hmm timing and accuracy comparison")
    bench.add_argument("--scenario", required=True)
    bench.add_argument("--out", required=True)
    timing = bench.add_mutually_exclusive_group()
    timing.add_argument("--serial", dest="serial", action="store_true", default=True,
                        help="run the two solvers sequentially (default)")
    timing.add_argument("--concurrent", dest="serial", action="store_false",
                        help="overlap the two runs (timing less clean)")

    stiff = sub.add_parser("stiffness", help="eigenvalue scale analysis of the scenario system")
    stiff.add_argument("--scenario", required=True)
    stiff.add_argument("--at", type=float, default=0.0,
                       help="trajectory time at which to linearize (default 0 = initial state)")
    stiff.add_argument("--threshold", type=float, default=10.0)

    ker = sub.add_parser("kernel-check", help="kernel moment table and frequency response")
    ker.add_argument("--eta", type=float, required=True)
    ker.add_argument("--sigma", type=float, default=None)
    ker.add_argument("--step", type=float, required=True)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            scenario = load_scenario(args.scenario)
            res = run_simulate(
                scenario, args.mode, args.out, anchor=args.anchor, decimate=args.decimate
            )
            print(
                f"{args.mode}: {res.rows_written} rows -> {res.csv_path} "
                f"(integration wall {res.wall_s:.3f} s)"
            )
        elif args.command == "bench":
            scenario = load_scenario(args.scenario)
            rep = run_bench(scenario, args.out, serial=args.serial)
            print(
                f"baseline {rep.wall_baseline_s:.3f} s | hmm {rep.wall_hmm_s:.3f} s | "
                f"speedup {rep.speedup_pct:.2f}%"
            )
            print(
                f"predicted step ratio {rep.predicted_step_ratio:.4f} "
                f"[{rep.predicted_step_ratio_note}] | measured (hmm phases) "
                f"{rep.t3_step_ratio_measured:.4f}"
            )
            if rep.errors:
                print(f"rel_l2 over {rep.errors['interval']}: {rep.errors['rel_l2']:.5f}")
        elif args.command == "stiffness":
            scenario = load_scenario(args.scenario)
            rep = run_stiffness(scenario, at_time=args.at, split_threshold=args.threshold)
            print(f"dimension:      {len(rep.eigenvalues)}")
            print(f"slow count k0:  {rep.k0}")
            print(f"scale gap:      {rep.scale_gap:.3f}")
            print(f"epsilon est.:   {rep.epsilon_estimate:.3e} s")
            print(f"max Re(lambda): {rep.max_real_part:.3e}  (unstable: {rep.unstable})")
            print(f"zero modes:     {rep.n_zero_modes}")
            print(f"min pair gap:   {rep.min_pairwise_gap:.3e}")
            mags = np.abs(rep.eigenvalues)
            print(f"slow |lambda|:  {np.array2string(mags[:rep.k0], precision=3)}")
        elif args.command == "kernel-check":
            run_kernel_check(args.eta, args.sigma, args.step)
    except _VALIDATION_ERRORS as exc:
        if isinstance(exc, ValidationError):
            print("validation failed:", file=sys.stderr)
            for v in exc.violations:
                print(f"  - {v}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
