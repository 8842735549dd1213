"""Command-line front end.

Exit codes: 0 on success, 2 for bad input (missing files, malformed text,
invalid parameters), 3 for numeric failures inside a solve.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import bench
from .approxot import PROJECTORS, approx_ot
from .core import as_marginal, format_matrix, read_matrix, read_vector, write_matrix
from .errors import (
    CapabilityError,
    DegenerateInputError,
    DimensionError,
    DomainError,
    FormatError,
    InvariantError,
    NumericOverflowError,
    ParameterError,
)
from .kernel import realize
from .oracle import exact_ot
from .rounding import round_randomized
from .sinkhorn import dist_to_polytope

EXIT_INPUT = 2
EXIT_NUMERIC = 3
SCHEMA_VERSION = 1
SEED_ENV = "OTKIT_SEED"

INPUT_ERRORS = (OSError, FormatError, DimensionError, DomainError, ParameterError, CapabilityError)
NUMERIC_ERRORS = (NumericOverflowError, InvariantError, DegenerateInputError, FloatingPointError, OverflowError)


def _load_problem(matrix_path, r_path, c_path):
    M = read_matrix(matrix_path)
    r = as_marginal(read_vector(r_path), normalize=True)
    c = as_marginal(read_vector(c_path), normalize=True)
    return M, r, c


def _residuals(P: np.ndarray, r, c) -> Tuple[float, float]:
    return (
        float(np.max(np.abs(P.sum(axis=1) - np.asarray(r)))),
        float(np.max(np.abs(P.sum(axis=0) - np.asarray(c)))),
    )


def _emit(payload: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps({"schema": SCHEMA_VERSION, **payload}, sort_keys=True))
        return
    for key, value in payload.items():
        print(f"{key}: {value}")


def cmd_solve(args) -> int:
    C, r, c = _load_problem(args.cost, args.r, args.c)
    report = approx_ot(C, r, c, args.eps, args.projector, eta=args.eta_override, trace=args.trace is not None)
    if args.trace is not None:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(report.trace.to_csv() if report.trace is not None else "iteration,dist,potential,target,index,violation\n")
    if args.out is not None:
        write_matrix(args.out, report.plan.entries)
    row_res, col_res = _residuals(report.plan.entries, r, c)
    _emit(
        {
            "objective": report.objective,
            "iterations": report.iterations,
            "eta": report.eta,
            "eps_prime": report.eps_prime,
            "projector": report.projector,
            "violation_before_rounding": report.violation,
            "row_residual": row_res,
            "col_residual": col_res,
            "wall_time_s": report.wall_time,
        },
        args.json,
    )
    return 0


def cmd_project(args) -> int:
    A, r, c = _load_problem(args.kernel, args.r, args.c)
    project = PROJECTORS[args.projector]
    K, trace = project(A, r, c, args.eps_prime, trace=True, max_iter=args.max_iter)
    if args.trace is not None:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(trace.to_csv())
    if args.out is not None:
        write_matrix(args.out, realize(K))
    _emit(
        {
            "projector": args.projector,
            "iterations": trace.iterations,
            "terminated": trace.terminated.value,
            "dist": dist_to_polytope(K.row_sums, K.col_sums, r.values, c.values),
        },
        args.json,
    )
    return 0


def cmd_round(args) -> int:
    F, r, c = _load_problem(args.matrix, args.r, args.c)
    plan = round_randomized(F, r, c, args.coin)
    if args.out is not None:
        write_matrix(args.out, plan.entries)
    else:
        sys.stdout.write(format_matrix(plan.entries))
    return 0


def cmd_oracle(args) -> int:
    C, r, c = _load_problem(args.cost, args.r, args.c)
    sol = exact_ot(C, r, c)
    if args.out is not None:
        write_matrix(args.out, sol.plan.entries)
    u, v = sol.duals
    _emit({"value": sol.value, "dual_value": float(np.dot(r.values, u) + np.dot(c.values, v))}, args.json)
    return 0


def _parse_pairs(text: Optional[str]) -> Optional[List[Tuple[int, int]]]:
    if text is None:
        return None
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            pairs.append((int(a), int(b)))
        except ValueError:
            raise ParameterError(f"bad image pair {item!r}; expected i:j") from None
    return pairs


def _parse_checkpoints(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ParameterError(f"bad checkpoint list {text!r}") from None


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ParameterError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def cmd_bench(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.threads < 1:
        raise ParameterError("--threads must be at least 1")
    cfg = bench.BenchConfig(
        mode=args.mode,
        m=args.m,
        fg=args.fg,
        eta=args.eta,
        eps=args.eps,
        pairs=args.pairs,
        seed=seed,
        budget=args.budget,
        checkpoints=_parse_checkpoints(args.checkpoints),
        round_objective=args.round_objective,
        mnist_path=args.mnist_file,
        mnist_pairs=_parse_pairs(args.mnist_pairs),
        noise=args.noise,
    )
    records, summary = bench.run_config(cfg, workers=args.threads)
    csv_path, json_path = bench.write_outputs(args.out, records, summary, timing=args.timing)
    final = summary.get("final")
    median = final["competitive_ratio"]["median"] if final else None
    print(f"records: {csv_path}")
    print(f"summary: {json_path}")
    print(f"final median competitive ratio: {median}")
    return 0


def _common_problem(p: argparse.ArgumentParser, first: str, first_help: str) -> None:
    p.add_argument(first, help=first_help)
    p.add_argument("r", help="row marginal file")
    p.add_argument("c", help="column marginal file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otkit",
        description="Approximate optimal transport by entropic scaling and rounding.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    projectors = sorted(PROJECTORS)

    p = sub.add_parser("solve", help="approximate OT cost within eps", allow_abbrev=False)
    _common_problem(p, "cost", "cost matrix file")
    p.add_argument("--eps", type=float, default=0.1, help="additive accuracy, in cost units (default 0.1)")
    p.add_argument("--projector", choices=projectors, default="sinkhorn", help="default sinkhorn")
    p.add_argument("--eta-override", type=float, default=None,
                   help="use this eta instead of 4 log n / eps; voids the accuracy guarantee (default off)")
    p.add_argument("--trace", default=None, metavar="CSV", help="write the projection trace here (default off)")
    p.add_argument("--out", default=None, help="write the plan here (default off)")
    p.add_argument("--json", action="store_true", help="print a JSON object instead of key: value lines")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("project", help="run only the approximate projection", allow_abbrev=False)
    _common_problem(p, "kernel", "positive matrix file")
    p.add_argument("--eps-prime", type=float, default=1e-3, help="target l1 marginal violation (default 1e-3)")
    p.add_argument("--projector", choices=projectors, default="sinkhorn", help="default sinkhorn")
    p.add_argument("--max-iter", type=int, default=None, help="stop after this many iterations (default: theory cap)")
    p.add_argument("--trace", default=None, metavar="CSV", help="write the dist/potential trace here (default off)")
    p.add_argument("--out", default=None, help="write the scaled matrix here (default off)")
    p.add_argument("--json", action="store_true", help="print a JSON object")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("round", help="round a nonnegative matrix onto the transport polytope", allow_abbrev=False)
    _common_problem(p, "matrix", "nonnegative matrix file")
    p.add_argument("--coin", type=int, choices=(0, 1), default=0, help="0 rows first, 1 columns first (default 0)")
    p.add_argument("--out", default=None, help="write the plan here instead of stdout")
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("oracle", help="exact OT by the transportation simplex", allow_abbrev=False)
    _common_problem(p, "cost", "cost matrix file")
    p.add_argument("--out", default=None, help="write the optimal plan here (default off)")
    p.add_argument("--json", action="store_true", help="print a JSON object")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="Sinkhorn vs Greenkhorn on image pairs", allow_abbrev=False)
    p.add_argument("--mode", choices=("synthetic", "mnist"), default="synthetic", help="default synthetic")
    p.add_argument("--m", type=int, default=20, help="synthetic image side (default 20)")
    p.add_argument("--fg", type=float, default=0.2, help="foreground area fraction in (0, 1] (default 0.2)")
    p.add_argument("--eta", type=float, default=None, help="kernel strength (default 4 log n / eps)")
    p.add_argument("--eps", type=float, default=0.1, help="accuracy used for the default eta (default 0.1)")
    p.add_argument("--pairs", type=int, default=10, help="number of image pairs (default 10)")
    p.add_argument("--seed", type=int, default=None, help=f"PCG64 seed (default ${SEED_ENV}, else 0)")
    p.add_argument("--budget", type=int, default=None, help="row/column update budget (default n^2)")
    p.add_argument("--checkpoints", default=None, help="comma-separated update counts (default 20 even points)")
    p.add_argument("--round-objective", action="store_true", help="also record the rounded plan's cost")
    p.add_argument("--out", default="bench_out", help="output directory (default bench_out)")
    p.add_argument("--threads", type=int, default=bench.default_workers(),
                   help="worker processes (default: number of cores)")
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column (breaks byte-identical output)")
    p.add_argument("--mnist-file", default=None, help="IDX3 image file for --mode mnist")
    p.add_argument("--mnist-pairs", default=None, help='explicit pairs "i:j,k:l" (default: seeded draw)')
    p.add_argument("--noise", type=float, default=0.01, help="added to zero MNIST pixels before normalising (default 0.01)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"otkit {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NUMERIC_ERRORS as exc:
        print(f"otkit {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
