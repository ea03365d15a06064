"""Command-line entry point: ``cqfi run | validate | audit``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import validate_config, with_overrides
from .errors import ConfigInvalid, CqfiError
from .runner import audit_directory, run

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _print_checks(checks) -> None:
    for c in checks:
        status = "n/a" if c.passed is None else ("PASS" if c.passed else "FAIL")
        tag = "hard" if c.hard else "info"
        margin = "" if c.margin is None else f"  margin={c.margin:.3e}"
        print(f"[{status:4}] ({tag}) {c.id:2d} {c.name}{margin}")


def _cmd_run(args) -> int:
    cfg = with_overrides(validate_config(args.config), seed=args.seed, n_trajs=args.n_trajs, out=args.out)
    report = run(cfg)
    _print_checks(report.checks)
    print(f"wrote {report.output_dir} in {report.wall_seconds:.1f} s (config {report.config_hash[:12]})")
    return EXIT_OK if report.passed else EXIT_AUDIT


def _cmd_validate(args) -> int:
    cfg = validate_config(args.config)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_audit(args) -> int:
    try:
        checks = audit_directory(args.run_dir)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: cannot audit {args.run_dir}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _print_checks(checks)
    return EXIT_OK if all(c.passed for c in checks if c.hard) else EXIT_AUDIT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cqfi", description="Conditional quantum Fisher information experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override ensemble.master_seed")
    r.add_argument("--n-trajs", type=int, help="override ensemble.n_trajs")
    r.add_argument("--out", help="override output.directory")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="parse and print a config with defaults filled")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)

    a = sub.add_parser("audit", help="re-check inequalities from a run directory")
    a.add_argument("run_dir")
    a.set_defaults(func=_cmd_audit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CqfiError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
