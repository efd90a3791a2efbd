"""Command line: run | verify | oracle | list-scenarios.

Exit codes: 0 ok, 1 configuration error or unknown scenario, 2 certificates
failed, 3 solver failure, 4 missing or corrupt run files.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import load_config, parse_lambdas
from .oracles import SCENARIOS, oracle_table
from .output import CorruptRun, fmt, verify_directory, write_csv, write_run
from .potentials import ConfigurationError
from .two_speed import UnresolvedJump, solve_two_speed
from .viscous_solver import StepFailure

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_SOLVER, EXIT_CORRUPT = 0, 1, 2, 3, 4

log = logging.getLogger("twospeed")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twospeed", description="Vanishing-viscosity two-speed solver.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a scenario or configured problem and write a run directory")
    run.add_argument("--config", type=Path, help="INI configuration file")
    run.add_argument("--scenario", help="built-in scenario providing defaults")
    run.add_argument("--lambda", dest="lambdas", help="comma-separated viscosities, e.g. 0.1,0.05,0.01")
    run.add_argument("--jobs", type=int, help="concurrent viscous runs")
    run.add_argument("--out", type=Path, help="output directory (default: output.directory)")

    ver = sub.add_parser("verify", help="re-check a run directory from its files")
    ver.add_argument("run_dir", type=Path)

    orc = sub.add_parser("oracle", help="print closed-form oracle series as CSV")
    orc.add_argument("scenario")
    orc.add_argument("--lambda", dest="lam", type=float, default=1.0)
    orc.add_argument("--samples", type=int, default=101)
    orc.add_argument("--out", type=Path, help="write CSV here instead of stdout")

    sub.add_parser("list-scenarios", help="list built-in scenarios")
    return ap


def cmd_run(args) -> int:
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else None
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        lams = parse_lambdas(args.lambdas, "--lambda") if args.lambdas is not None else None
        rc = load_config(text, scenario_name=args.scenario,
                         overrides={"lambdas": lams, "jobs": args.jobs,
                                    "directory": str(args.out) if args.out else None})
        problem = rc.build_problem()
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("solving %s with lambdas %s", problem.name, rc.two_speed.lambdas)
    try:
        sol = solve_two_speed(problem, rc.two_speed)
    except (StepFailure, UnresolvedJump, ConfigurationError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    out = Path(rc.directory)
    summary = write_run(sol, rc, out)
    log.info("wrote %s", out)
    if not sol.passed:
        for e in sol.certificates.failures:
            print(f"certificate failed: {e.name} lhs={e.lhs:.6g} rhs={e.rhs:.6g} tol={e.tol:.3g}",
                  file=sys.stderr)
        return EXIT_CERT
    print(f"ok: {out} (S0={summary['S0']:.6g}, jumps={summary['n_jumps']})")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        rep = verify_directory(args.run_dir)
    except CorruptRun as e:
        print(f"corrupt run: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    if not rep.passed:
        for e in rep.failures:
            print(f"certificate failed: {e.name} lhs={e.lhs:.6g} rhs={e.rhs:.6g} tol={e.tol:.3g}",
                  file=sys.stderr)
        return EXIT_CERT
    print(f"verified: {len(rep)} certificates")
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        header, rows = oracle_table(args.scenario, args.lam, args.samples)
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        write_csv(args.out, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows([fmt(x) for x in r] for r in rows)
    return EXIT_OK


def cmd_list(_args) -> int:
    for name in sorted(SCENARIOS):
        print(f"{name}\t{SCENARIOS[name].description}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handlers = {"run": cmd_run, "verify": cmd_verify, "oracle": cmd_oracle,
                "list-scenarios": cmd_list}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
