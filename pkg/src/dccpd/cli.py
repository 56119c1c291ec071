"""Command-line harness.

Subcommands: ``decompose`` (file in, factors out), ``exact`` (noiseless
benchmark), ``jbss`` (SNR sweep against the per-tensor baseline),
``rmax`` (generic rank-bound table), ``doa`` (narrowband demo).  Every
config field can come from a JSON file (``--config``) and be overridden
by flags.  Exit codes: 0 success, 1 solver failure, 2 input error.
"""

import argparse
import json
import sys
from dataclasses import fields

import numpy as np

from .exceptions import DccpdError, DimensionError
from .experiments import (
    ExperimentConfig,
    run_doa_demo,
    run_exact_bench,
    run_jbss_bench,
    run_rmax,
)
from .io import load_problem, save_solution, write_csv_report
from .model import SolverOptions, relative_cost
from .algebraic import solve_algebraic

__all__ = ["main", "build_parser"]


def _add_common(sub):
    sub.add_argument("--config", help="JSON file with config fields")
    sub.add_argument("--seed", type=int, help="root seed")
    sub.add_argument("--runs", type=int, help="Monte-Carlo runs")
    sub.add_argument("--out", dest="output_path", help="output path")
    sub.add_argument("--workers", type=int, help="parallel workers (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dccpd",
        description="Double coupled CPD: solvers, benchmarks, and demos",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    dec = subs.add_parser("decompose", help="decompose a tensor-set file")
    dec.add_argument("--input", required=True, help="tensor-set JSON file")
    dec.add_argument("--out", dest="output_path", required=True, help="solution JSON")
    dec.add_argument("--report", help="report JSON path")
    dec.add_argument("--rank", type=int, help="force the rank instead of detecting it")
    dec.add_argument("--solver", choices=["algebraic", "algebraic+als"], default="algebraic")
    dec.add_argument("--seed", type=int, default=0)
    dec.add_argument("--noisy", action="store_true", help="relax noiseless diagnostics")

    exact = subs.add_parser("exact", help="exact-decomposition benchmark")
    _add_common(exact)
    exact.add_argument("--n", dest="N", type=int, help="channels per dataset")
    exact.add_argument("--r", dest="R", type=int, help="components")
    exact.add_argument("--m", dest="M", type=int, help="datasets")
    exact.add_argument("--solver", choices=["algebraic", "als", "algebraic+als"])
    exact.add_argument("--max-iter", dest="max_iter", type=int)
    exact.add_argument("--als-tol", dest="als_rel_tol", type=float)

    jbss = subs.add_parser("jbss", help="J-BSS SNR sweep")
    _add_common(jbss)
    jbss.add_argument("--n", dest="N", type=int)
    jbss.add_argument("--r", dest="R", type=int)
    jbss.add_argument("--m", dest="M", type=int)
    jbss.add_argument("--frame-len", dest="L", type=int)
    jbss.add_argument("--frames", dest="T", type=int)
    jbss.add_argument("--overlap", dest="alpha", type=float)
    jbss.add_argument("--segments", dest="P", type=int)
    jbss.add_argument("--snr", dest="snr_db_list", help="comma-separated SNR list in dB")
    jbss.add_argument("--solver", choices=["algebraic", "als", "algebraic+als"])
    jbss.add_argument("--max-iter", dest="max_iter", type=int)
    jbss.add_argument("--als-tol", dest="als_rel_tol", type=float)

    rmax = subs.add_parser("rmax", help="generic rank-bound table")
    _add_common(rmax)
    rmax.add_argument("--n-list", dest="n_list", help="comma-separated channel counts")
    rmax.add_argument("--m", dest="M", type=int)
    rmax.add_argument("--trials", type=int)

    doa = subs.add_parser("doa", help="narrowband per-bin DOA demo")
    _add_common(doa)
    doa.add_argument("--scene", choices=["overdet-l", "underdet-circ"])
    doa.add_argument("--snr", dest="snr_db_list", help="comma-separated SNR list in dB")
    doa.add_argument("--bins", help="comma-separated bin frequencies in Hz")
    doa.add_argument("--q-bin", dest="q_bin", type=int, help="samples per bin")
    doa.add_argument("--segments", dest="p_bin", type=int, help="amplitude segments per bin")
    doa.add_argument("--solver", choices=["algebraic", "als", "algebraic+als"])
    doa.add_argument("--max-iter", dest="max_iter", type=int)
    doa.add_argument("--als-tol", dest="als_rel_tol", type=float)
    doa.add_argument("--report", help="detail JSON path")
    doa.set_defaults(solver="algebraic+als")

    return parser


def _parse_float_list(text):
    return [float(tok) for tok in str(text).split(",") if tok != ""]


def _parse_int_list(text):
    return [int(tok) for tok in str(text).split(",") if tok != ""]


def _config_from_args(args):
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            values.update(json.load(fh))
    known = {f.name for f in fields(ExperimentConfig)}
    for key, val in vars(args).items():
        if key in known and val is not None:
            values[key] = val
    if isinstance(values.get("snr_db_list"), str):
        values["snr_db_list"] = _parse_float_list(values["snr_db_list"])
    if isinstance(values.get("n_list"), str):
        values["n_list"] = _parse_int_list(values["n_list"])
    if isinstance(values.get("bins"), str):
        values["bins"] = _parse_float_list(values["bins"])
    values = {k: v for k, v in values.items() if k in known}
    values["experiment"] = args.command
    return ExperimentConfig(**values).validate()


def _cmd_decompose(args):
    try:
        problem = load_problem(args.input)
    except (OSError, ValueError, KeyError, DimensionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    opts = SolverOptions(
        rank=args.rank,
        seed=args.seed,
        refine=args.solver == "algebraic+als",
        noisy=args.noisy,
    )
    try:
        sol, report = solve_algebraic(problem, opts)
    except DccpdError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    save_solution(sol, args.output_path)
    if args.report:
        payload = {
            "rank": report["rank"],
            "path": report["path"],
            "symmetrized": report["symmetrized"],
            "cost": relative_cost(problem, sol) * problem.norm_sq(),
            "relative_cost": report["relative_cost"],
            "wall_s": report["wall_s"],
        }
        with open(args.report, "w") as fh:
            json.dump(payload, fh, indent=2)
    print(
        f"decomposed rank {report['rank']} via {report['path']} path, "
        f"relative cost {report['relative_cost']:.3e}"
    )
    return 0


def _print_rows(rows):
    for row in rows:
        if row["run"] == "mean":
            snr = "" if row["snr_db"] is None else f" snr={row['snr_db']:g}dB"
            print(
                f"  {row['solver']:<16}{snr}  mean epsilon = {row['epsilon']:.6e}"
            )


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "decompose":
            return _cmd_decompose(args)
        cfg = _config_from_args(args)
        if args.command == "exact":
            rows = run_exact_bench(cfg)
        elif args.command == "jbss":
            rows = run_jbss_bench(cfg)
        elif args.command == "rmax":
            results = run_rmax(cfg)
            print(f"{'N':>3} {'computed':>9} {'table':>6} {'cpd':>5}  match")
            mismatch = False
            for res in results:
                print(
                    f"{res['N']:>3} {res['computed']:>9} "
                    f"{res['table_dccpd'] if res['table_dccpd'] is not None else '-':>6} "
                    f"{res['table_cpd'] if res['table_cpd'] is not None else '-':>5}  "
                    f"{'ok' if res['match'] else 'MISMATCH'}"
                )
                mismatch = mismatch or not res["match"]
            if cfg.output_path:
                with open(cfg.output_path, "w") as fh:
                    json.dump(results, fh, indent=2)
            return 1 if mismatch else 0
        elif args.command == "doa":
            rows, details = run_doa_demo(cfg)
            if getattr(args, "report", None):
                with open(args.report, "w") as fh:
                    json.dump(details, fh, indent=2)
        else:  # pragma: no cover
            raise DimensionError(f"unknown command {args.command!r}")
    except DimensionError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (DccpdError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    if cfg.output_path:
        write_csv_report(rows, cfg.output_path)
        print(f"wrote {cfg.output_path}")
    _print_rows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
