"""Command line entry point.

Usage examples::

    modalselect solve --n 1000 --d 1 --grid 2001 --out tables/n1000_d1.uss.gz
    modalselect simulate --table tables/n1000_d1.uss.gz --reps 10000 --seed 1 --out sim.json
    modalselect offline --n 10000 --reps 100 --seed 3 --out prophet.json
    modalselect compare --n 1000 --d 1 --reps 10000 --offline-reps 200 --out cmp.json --csv cmp.csv
    modalselect report --n 50 200 1000 --d 0 1 2 --reps 2000 --out report.json --csv report.csv

Exit codes: 0 success, 1 invariant violation, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bellman import ProblemSpec, lower_bound, solve, upper_bound
from .errors import ConfigurationError, DomainError
from .offline import offline_replications, offline_summary, read_sequence_csv
from .policy import OptimalPolicy, WindowPolicy
from .simulate import derive_seed, run_batch, run_trajectory
from .stats import DEFAULT_C_SLACK, bound_report, conjecture_report, write_report_csv
from .tableio import load_tables, read_header, save_table

log = logging.getLogger("modalselect")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2
REPORT_FORMAT = "uss-report-1"


class UsageError(Exception):
    pass


def _f6(x: float) -> str:
    return f"{x:.6f}"


def _document(kind: str, body: dict) -> dict:
    return {
        "format": REPORT_FORMAT,
        "kind": kind,
        "version": __version__,
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **body,
    }


def _writable(path) -> Path:
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.is_dir():
        raise UsageError(f"output directory {parent} does not exist")
    if not os.access(parent, os.W_OK):
        raise UsageError(f"output directory {parent} is not writable")
    return path


def _write_json(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _make_policy(name: str, spec, tt, reflect: bool = False):
    if name == "optimal":
        return OptimalPolicy(tt, reflect=reflect)
    return WindowPolicy(spec)


def _bounds_lines(spec, value: float, c_slack: float) -> list[str]:
    return [
        f"v_1(0,0) = {_f6(value)}",
        f"upper bound sqrt(2(d+1)n) = {_f6(upper_bound(spec.n, spec.d))}",
        f"lower bound (c_slack={c_slack:g}) = {_f6(lower_bound(spec.n, spec.d, c_slack))}",
    ]


# --------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    spec = ProblemSpec(args.n, args.d, args.grid)
    out = _writable(args.out) if args.out else None
    vt, _ = solve(spec)
    if out is not None:
        save_table(vt, out)
        log.info("wrote %s", out)
    print(f"n={spec.n} d={spec.d} grid={spec.grid_size}")
    for line in _bounds_lines(spec, vt.v0, args.c_slack):
        print(line)
    return EXIT_OK


def _load_checked(args):
    if not Path(args.table).is_file():
        raise UsageError(f"table file {args.table} not found")
    meta = read_header(args.table)
    for flag, key in (("n", "n"), ("d", "d"), ("grid", "m")):
        wanted = getattr(args, flag, None)
        if wanted is not None and wanted != meta[key]:
            raise ConfigurationError(f"--{flag} {wanted} does not match table ({key}={meta[key]})")
    return load_tables(args.table)


def cmd_simulate(args) -> int:
    out = _writable(args.out) if args.out else None
    traj_dir = Path(args.trajectory_dir) if args.dump_trajectories else None
    if traj_dir is not None:
        traj_dir.mkdir(parents=True, exist_ok=True)
    vt, tt = _load_checked(args)
    spec = vt.spec
    policy = _make_policy(args.policy, spec, tt, reflect=args.reflect)
    batch = run_batch(policy, spec, vt, args.reps, args.seed, workers=args.workers)

    for j in range(min(args.dump_trajectories, args.reps)):
        seed = derive_seed(args.seed, j)
        run_trajectory(policy, spec, vt, seed=seed).write_csv(traj_dir / f"trajectory_{j:05d}.csv")

    ok = batch.all_feasible and (args.policy != "optimal" or batch.martingale_bound_holds())
    doc = _document("simulate", {**batch.to_dict(), "reflect": args.reflect, "invariants_ok": ok})
    _write_json(doc, out)
    print(f"policy={args.policy} reps={batch.reps} mean={_f6(batch.sample_mean)} "
          f"variance={_f6(batch.sample_variance)} stderr={_f6(batch.stderr_mean)}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_offline(args) -> int:
    out = _writable(args.out) if args.out else None
    if args.input:
        res = offline_summary(read_sequence_csv(args.input), max_d=args.max_d)
        body = {"input": str(args.input), "lis": res.lis, "lds": res.lds, "u_n": res.u_n,
                "d_n": res.d_n, "l_n": res.l_n, "dmodal": {str(k): v for k, v in res.dmodal.items()}}
    else:
        if args.n is None:
            raise UsageError("offline needs --input or --n")
        lengths = offline_replications(args.n, args.reps, args.seed, d=args.d, orientation=args.orientation)
        body = {"n": args.n, "d": args.d, "reps": args.reps, "base_seed": args.seed,
                "orientation": args.orientation, "mean": float(lengths.mean()),
                "variance": float(lengths.var(ddof=1)) if args.reps > 1 else 0.0,
                "asymptotic_mean": float(2.0 * np.sqrt(2.0 * args.n)) if args.d == 1 else None,
                "lengths": lengths.tolist()}
    _write_json(_document("offline", body), out)
    return EXIT_OK


def _tables_for(args, spec):
    if getattr(args, "table", None):
        vt, tt = _load_checked(args)
        if (vt.spec.n, vt.spec.d) != (spec.n, spec.d):
            raise ConfigurationError("table does not match --n/--d")
        return vt, tt
    return solve(spec)


def _compare_one(spec, args, policy_name: str, vt, tt):
    policy = _make_policy(policy_name, spec, tt)
    batch = run_batch(policy, spec, vt, args.reps, args.seed, workers=args.workers)
    offline = offline_replications(spec.n, args.offline_reps, args.seed, d=spec.d,
                                   orientation=args.orientation)
    return batch, bound_report(vt, batch, float(offline.mean()), args.c_slack)


def cmd_compare(args) -> int:
    out = _writable(args.out) if args.out else None
    csv_path = _writable(args.csv) if args.csv else None
    spec = ProblemSpec(args.n, args.d, args.grid)
    vt, tt = _tables_for(args, spec)
    batch, report = _compare_one(vt.spec, args, args.policy, vt, tt)
    body = {"base_seed": args.seed, "reps": args.reps, "offline_reps": args.offline_reps,
            "orientation": args.orientation, "report": report.to_dict()}
    _write_json(_document("compare", body), out)
    if csv_path is not None:
        write_report_csv([report], csv_path)
    print(f"solver={_f6(report.solver_value)} mc_mean={_f6(report.mc_mean)} "
          f"offline_mean={_f6(report.offline_mean)} prophet_ratio={_f6(report.prophet_ratio)}",
          file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_report(args) -> int:
    out = _writable(args.out) if args.out else None
    csv_path = _writable(args.csv) if args.csv else None
    reports, conjectures = [], []
    for n in args.n:
        for d in args.d:
            spec = ProblemSpec(n, d, args.grid)
            vt, tt = solve(spec)
            for policy_name in args.policies:
                batch, rep = _compare_one(spec, args, policy_name, vt, tt)
                reports.append(rep)
                if policy_name == "optimal" and batch.reps >= 1000:
                    conjectures.append(conjecture_report(batch, seed=args.seed))
                print(f"n={n} d={d} policy={policy_name} solver={_f6(rep.solver_value)} "
                      f"mc_mean={_f6(rep.mc_mean)} var/mean={_f6(rep.var_over_mean)} "
                      f"prophet_ratio={_f6(rep.prophet_ratio)} passed={rep.passed}", file=sys.stderr)
    body = {"base_seed": args.seed, "reps": args.reps, "offline_reps": args.offline_reps,
            "grid_size": args.grid, "reports": [r.to_dict() for r in reports],
            "conjectures": conjectures}
    _write_json(_document("report", body), out)
    if csv_path is not None:
        write_report_csv(reports, csv_path)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


# --------------------------------------------------------------------------
# argument parsing


def _positive(value: str) -> int:
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return v


def _nonneg(value: str) -> int:
    v = int(value)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="modalselect", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common_mc(p):
        p.add_argument("--reps", type=_positive, default=1000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=_positive, default=1)
        p.add_argument("--out", default=None, help="JSON output path (default: stdout)")

    p = sub.add_parser("solve", help="solve and persist the value table")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--d", type=_nonneg, default=1)
    p.add_argument("--grid", type=int, default=2001)
    p.add_argument("--c-slack", type=float, default=DEFAULT_C_SLACK)
    p.add_argument("--out", default=None, help="table file (.gz for compression)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="run a policy on seeded streams")
    p.add_argument("--table", required=True)
    p.add_argument("--n", type=_positive, default=None)
    p.add_argument("--d", type=_nonneg, default=None)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--policy", choices=("optimal", "heuristic"), default="optimal")
    p.add_argument("--reflect", action="store_true", help="select down-first (x -> 1 - x)")
    p.add_argument("--dump-trajectories", type=_nonneg, default=0, metavar="K",
                   help="write CSVs for the first K runs")
    p.add_argument("--trajectory-dir", default="trajectories")
    common_mc(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("offline", help="prophet oracles")
    p.add_argument("--input", default=None, help="CSV, one value per line")
    p.add_argument("--max-d", type=_nonneg, default=2)
    p.add_argument("--n", type=_positive, default=None)
    p.add_argument("--d", type=_nonneg, default=1)
    p.add_argument("--orientation", choices=("up-first", "best-of-both"), default="best-of-both")
    p.add_argument("--reps", type=_positive, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_offline)

    for name, helptext in (("compare", "bound report with prophet ratio"),
                           ("report", "bound reports over a matrix of (n, d, policy)")):
        p = sub.add_parser(name, help=helptext)
        if name == "compare":
            p.add_argument("--n", type=_positive, required=True)
            p.add_argument("--d", type=_nonneg, default=1)
            p.add_argument("--policy", choices=("optimal", "heuristic"), default="optimal")
            p.add_argument("--table", default=None, help="reuse a solved table")
            p.set_defaults(func=cmd_compare)
        else:
            p.add_argument("--n", type=_positive, nargs="+", default=[50, 200, 1000])
            p.add_argument("--d", type=_nonneg, nargs="+", default=[0, 1, 2])
            p.add_argument("--policies", nargs="+", choices=("optimal", "heuristic"),
                           default=["optimal", "heuristic"])
            p.set_defaults(func=cmd_report)
        p.add_argument("--grid", type=int, default=2001)
        p.add_argument("--offline-reps", type=_positive, default=100)
        p.add_argument("--orientation", choices=("up-first", "best-of-both"), default="best-of-both")
        p.add_argument("--c-slack", type=float, default=DEFAULT_C_SLACK)
        p.add_argument("--csv", default=None, help="flat CSV output path")
        common_mc(p)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DomainError, ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
