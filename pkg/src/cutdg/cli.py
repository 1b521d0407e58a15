"""Command line entry point: ``cutdg <command> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from .config import StudyConfig, load_config, parse_config
from .linalg import SolverError
from .problems import is_interface, make_problem
from .study import (SWEEP_COLUMNS, run_convergence, run_interface_convergence,
                    run_parameter_scaling, run_translation_sweep, solve_problem, write_csv,
                    _params, _problem)

log = logging.getLogger("cutdg")

DEFAULT_NAMES = {
    "solve": "solve.csv",
    "converge": "converge.csv",
    "sweep-translate": "sweep.csv",
    "param-scale": "param_scale.csv",
    "interface-converge": "interface_converge.csv",
}

SOLVE_COLUMNS = ["n", "h", "dofs", "l2", "h1", "energy", "kappa", "converged"]


def _load(args):
    cfg = load_config(args.config) if args.config else StudyConfig()
    if args.set:
        cfg = parse_config("\n".join(args.set), cfg)
    return cfg


def _out_path(cfg, args):
    name = cfg.out_csv or DEFAULT_NAMES[args.command]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        if not os.path.isabs(name):
            name = os.path.join(args.out, name)
    return name


def _cmd_solve(cfg, args, path):
    problem = _problem(cfg)
    params = _params(cfg, problem)
    row = {"n": cfg.n, "h": math.nan, "dofs": 0, "l2": math.nan, "h1": math.nan,
           "energy": math.nan, "kappa": math.nan, "converged": False}
    try:
        res = solve_problem(problem, cfg.n, cfg.order, params, cfg.depth_for(cfg.order),
                            cfg.quad_order(cfg.order), cfg.eps, errors=cfg.errors,
                            cond=cfg.condition, error_depth=cfg.error_extra_depth)
    except SolverError as exc:
        log.error("solve failed: %s", exc)
        write_csv(path, SOLVE_COLUMNS, [row])
        return 1
    e = res.errors
    if e is not None:
        h1 = e.h1_semi if is_interface(problem) else e.h1_full
        row.update(h=e.h, dofs=e.dofs, l2=e.l2, h1=h1, energy=e.energy)
    else:
        row.update(h=res.discretization.mesh.h, dofs=res.system.n_dofs)
    if res.cond is not None:
        row["kappa"] = res.cond.kappa
    row["converged"] = True
    write_csv(path, SOLVE_COLUMNS, [row])
    print(", ".join(f"{k}={row[k]:.6g}" if isinstance(row[k], float) else f"{k}={row[k]}"
                    for k in SOLVE_COLUMNS))
    if args.dump_matrix:
        res.system.dump(args.dump_matrix)
    if args.dump_mesh:
        res.discretization.mesh.dump(args.dump_mesh)
    return 0


def _print_row(row):
    print(f"n={row['n']} h={row['h']:.4g} dofs={row['dofs']} l2={row['l2']:.4e} "
          f"h1={row['h1']:.4e} eoc_l2={row['eoc_l2']:.2f} eoc_h1={row['eoc_h1']:.2f}",
          flush=True)


def _cmd_converge(cfg, args, path):
    if is_interface(make_problem(cfg.problem)):
        raise SystemExit(f"{cfg.problem} is an interface problem; use interface-converge")
    table = run_convergence(cfg, out_csv=path, on_row=_print_row)
    return 1 if table.failures else 0


def _cmd_interface(cfg, args, path):
    table = run_interface_convergence(cfg, out_csv=path, on_row=_print_row)
    return 1 if table.failures else 0


def _cmd_sweep(cfg, args, path):
    rows = run_translation_sweep(cfg, out_csv=path)
    failed = sum(1 for r in rows if not r["converged"])
    by_variant = {}
    for r in rows:
        by_variant.setdefault(r["variant"], []).append(r)
    for var, rs in by_variant.items():
        k = [r["kappa"] for r in rs if r["converged"] and math.isfinite(r["kappa"])]
        if k:
            print(f"{var}: {len(rs)} rows, kappa max/min = {max(k) / min(k):.3g}")
        else:
            print(f"{var}: {len(rs)} rows, no finite condition numbers")
    return 1 if failed else 0


def _cmd_scale(cfg, args, path):
    rows = run_parameter_scaling(cfg, out_csv=path)
    for r in rows:
        print(f"{r['variant']} scale={r['scale']:.0e} kappa_max={r['kappa_max']:.3e} "
              f"fluctuation={r['fluctuation']:.3g} failed={r['failed']}")
    return 1 if any(r["failed"] for r in rows) else 0


COMMANDS = {
    "solve": _cmd_solve,
    "converge": _cmd_converge,
    "sweep-translate": _cmd_sweep,
    "param-scale": _cmd_scale,
    "interface-converge": _cmd_interface,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="cutdg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", help="output directory for CSV files")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--strict", action="store_true",
                       help="exit nonzero if any row failed")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "solve":
            p.add_argument("--dump-matrix", metavar="PATH",
                           help="write the system matrix as 'i j value' lines")
            p.add_argument("--dump-mesh", metavar="PATH", help="write the background mesh")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        path = _out_path(cfg, args)
        status = COMMANDS[args.command](cfg, args, path)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return status if args.strict else 0


if __name__ == "__main__":
    sys.exit(main())
