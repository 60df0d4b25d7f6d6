"""Command-line entry point: ``jte solve | verify | oracle``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import ConfigError, load_config
from .kinematics import KinematicsError
from .pipeline import oracle_only, run_pipeline, verify_only
from .report import FORMATS, emit_report
from .verify import InfeasibleReferenceError, write_samples_csv

logger = logging.getLogger("jte")

EXIT_OK, EXIT_WARN, EXIT_FAIL = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jte", description="Certified joint tolerance of a serial arm near half planes.")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="config file, or the name of a shipped config")
    common.add_argument("--seed", type=int, help="override the sampling and solver seed")
    common.add_argument("--trace", action="store_true", help="log every constructed problem")
    common.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("solve", parents=[common], help="certify a tolerance and verify it")
    s.add_argument("--report", help="output path (default: stdout)")
    s.add_argument("--format", choices=FORMATS, default="text-table")
    s.add_argument("--samples", metavar="CSV", help="write the combined sample check to this CSV file")
    s.add_argument("--cone-order", type=int, help="override the cone order")
    s.add_argument("--no-timing", action="store_true", help="omit wall-clock times for reproducible output")

    v = sub.add_parser("verify", parents=[common], help="sample-check a given tolerance")
    v.add_argument("--lambda", dest="lam", type=float, required=True, help="tolerance in radians")
    v.add_argument("--samples", metavar="CSV", help="write the samples to this CSV file")

    sub.add_parser("oracle", parents=[common], help="bisection bracket of the true tolerance")
    return ap


def _setup_logging(args) -> None:
    level = logging.WARNING
    if args.verbose:
        level = logging.INFO
    if args.trace:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(args):
    spec = load_config(args.config)
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        changes["seed"] = args.seed
        changes["solver"] = dataclasses.replace(spec.solver, seed=args.seed)
    if getattr(args, "cone_order", None) is not None:
        if not 1 <= args.cone_order <= spec.dof + 1:
            raise ConfigError(f"--cone-order must be in 1..{spec.dof + 1}")
        changes["cone_order"] = args.cone_order
    return dataclasses.replace(spec, **changes) if changes else spec


def _solve(args) -> int:
    spec = _load(args)
    report = run_pipeline(spec)
    code = emit_report(report, args.format, args.report, timing=not args.no_timing)
    if args.samples and report.combined_samples is not None:
        write_samples_csv(args.samples, report.combined_samples)
    return code


def _verify(args) -> int:
    spec = _load(args)
    if args.lam < 0:
        raise ConfigError("--lambda must be nonnegative")
    rep = verify_only(spec, args.lam)
    print(f"{spec.name}: λ = {args.lam:.4f} rad, {rep.violations} violations in {rep.n_samples} samples, "
          f"smallest f(x) {rep.min_f:.4f} m (seed {rep.seed})")
    if args.samples:
        write_samples_csv(args.samples, rep)
    return EXIT_OK if rep.violations == 0 else EXIT_FAIL


def _oracle(args) -> int:
    spec = _load(args)
    for name, lo, hi in oracle_only(spec):
        print(f"{name}\t{lo:.6f}\t{hi:.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _setup_logging(args)
    try:
        return {"solve": _solve, "verify": _verify, "oracle": _oracle}[args.command](args)
    except (ConfigError, InfeasibleReferenceError, KinematicsError) as exc:
        print(f"jte: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"jte: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
