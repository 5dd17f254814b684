"""Command line front end: ``admlab run|shift-example|duality``."""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys

import numpy as np

from .errors import ConfigError, InvalidInputError
from .measures import BVFunction
from .scenarios import (
    EXIT_ASSERTION,
    EXIT_INPUT_ERROR,
    EXIT_PASS,
    ShiftExampleConfig,
    corpus_dir,
    parse_tau_grid,
    run_scenario,
    run_shift_example,
    write_json_report,
    write_norm_curve_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="admlab",
        description="Numerical laboratory for admissibility of control and "
                    "observation operators for C0-semigroups.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run scenario TOML files")
    p_run.add_argument("scenarios", nargs="+", help="scenario .toml paths")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel scenario workers")
    p_run.add_argument("--out", default=None, help="output directory override")

    p_shift = sub.add_parser("shift-example", help="zero-class analysis of a BV file")
    p_shift.add_argument("--bv", required=True, help="BVFunction JSON file (or corpus name)")
    p_shift.add_argument("--n", type=int, default=1024)
    p_shift.add_argument("--tau-grid", default="1e-3:0.5:geom=8")
    p_shift.add_argument("--boundary-atom", choices=("keep", "drop"), default="keep")
    p_shift.add_argument("--atom-tol", type=float, default=1e-2)
    p_shift.add_argument("--rel-threshold", type=float, default=1e-2)
    p_shift.add_argument("--seed", type=int, default=0)
    p_shift.add_argument("--out", default=".")

    p_dual = sub.add_parser("duality", help="run a duality check on a seeded model")
    p_dual.add_argument("--kind", choices=("control", "observation"), required=True)
    p_dual.add_argument("--p", default="2")
    p_dual.add_argument("--seed", type=int, default=0)
    p_dual.add_argument("--model", choices=("matrix", "shift"), default="matrix")
    p_dual.add_argument("--d", type=int, default=4, help="matrix dimension")
    p_dual.add_argument("--n", type=int, default=512, help="shift grid cells")
    p_dual.add_argument("--bv", default=None, help="BV file for shift observations")
    p_dual.add_argument("--tau-grid", default=None)
    p_dual.add_argument("--out", default=".")
    return parser


def _resolve_bv(path: str) -> str:
    if os.path.exists(path):
        return path
    cand = os.path.join(corpus_dir(), path)
    if os.path.exists(cand):
        return cand
    cand = os.path.join(corpus_dir(), path + ".json")
    if os.path.exists(cand):
        return cand
    raise ConfigError(f"BV file not found: {path}")


def _cmd_run(args) -> int:
    if args.jobs > 1 and len(args.scenarios) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(run_scenario, args.scenarios,
                                  [args.out] * len(args.scenarios)))
    else:
        codes = [run_scenario(path, args.out) for path in args.scenarios]
    return max(codes) if codes else EXIT_PASS


def _cmd_shift_example(args) -> int:
    c = BVFunction.load(_resolve_bv(args.bv))
    cfg = ShiftExampleConfig(
        n=args.n, tau_grid=args.tau_grid, boundary_atom=args.boundary_atom,
        atom_tol=args.atom_tol, rel_threshold=args.rel_threshold, seed=args.seed)
    report = run_shift_example(c, cfg)
    name = os.path.splitext(os.path.basename(args.bv))[0]
    prefix = os.path.join(args.out, f"shift-example-{name}")
    write_json_report(prefix + ".report.json", report.to_json_dict())
    write_norm_curve_csv(prefix + ".norms.csv", report.curve)
    print(f"shift-example {name}: verdict={report.zero_class['verdict']} "
          f"atoms={len(report.atoms)} agreement={report.agreement} "
          f"member={report.membership['member']}")
    return EXIT_PASS if report.agreement else EXIT_ASSERTION


def _cmd_duality(args) -> int:
    from .duality import check_control_duality, check_observation_duality
    from .measures import derivative_measure
    from .semigroups import (ObservationOperator, bounded_control,
                             random_nilpotent_model, shift_right_l1)

    rng = np.random.default_rng(args.seed)
    p = float("inf") if str(args.p).lower() in ("inf", "infty", "infinity") else float(args.p)
    if args.model == "matrix":
        S = random_nilpotent_model(args.d, rng)
        taus = parse_tau_grid(args.tau_grid or "0.25:1.0:geom=3")
    else:
        S = shift_right_l1(args.n)
        taus = parse_tau_grid(args.tau_grid or "0.125:0.5:geom=3")
    if args.kind == "control":
        b = rng.standard_normal(S.dim)
        b = b / max(S.norm(b), 1e-300)
        B = bounded_control(S, b)
        report = check_control_duality(B, p, taus, S, rng=rng)
    else:
        if args.model == "matrix":
            row = rng.standard_normal(S.dim)
            C = ObservationOperator(kind="matrix_row", row=row / np.linalg.norm(row))
        else:
            c = BVFunction.load(_resolve_bv(args.bv or "smooth_bump"))
            C = ObservationOperator(kind="measure", mu=derivative_measure(c))
        report = check_observation_duality(C, p, taus, S, rng=rng)
    payload = report.to_json_dict()
    payload["cli"] = {"kind": args.kind, "p": str(args.p), "seed": args.seed,
                      "model": args.model, "d": args.d, "n": args.n}
    out = os.path.join(args.out, f"duality-{args.kind}-p{args.p}-seed{args.seed}.json")
    write_json_report(out, payload)
    print(f"duality {args.kind} p={args.p} seed={args.seed}: passed={report.passed}")
    return EXIT_PASS if report.passed else EXIT_ASSERTION


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "shift-example":
            return _cmd_shift_example(args)
        if args.command == "duality":
            return _cmd_duality(args)
    except (ConfigError, InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
