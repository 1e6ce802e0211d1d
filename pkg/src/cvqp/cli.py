"""Command-line front end.

Two subcommands:

    cvqp solve <file> [solver flags]
        Solve one problem from a JSON file; print a JSON result summary
        to stdout.  Exit 0 on Optimal, 2 when an iteration or time limit
        stopped the solve, 1 on any input error.

    cvqp bench <projection|portfolio|quantile> --m <list> --seeds <k> ...
        Run a benchmark family over a grid of sizes and seeds, appending
        one CSV record per (m, seed) cell and printing per-m mean times.

Benchmark cells are pure functions of (family, sizes, flags, seed), so
the non-timing CSV columns are reproducible bit for bit; `--parallel N`
(capped by the CVQP_THREADS environment variable) only reorders the
work, never the rows.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    CvqpError,
    CvqpProblem,
    SolverSettings,
    Status,
    sum_k_largest,
)
from .generators import (
    PortfolioConfig,
    ProjectionConfig,
    QuantileConfig,
    gen_portfolio,
    gen_projection,
    gen_quantile,
)
from .io import dump_problem, load_problem
from .projection import project_sum_k_largest
from .solver import solve

__all__ = ["BenchmarkRecord", "CSV_HEADER", "main"]

CSV_HEADER = "family,m,n,seed,status,iters,total_s,fact_s,proj_s,objective,r_norm,s_norm"

FAMILIES = ("projection", "portfolio", "quantile")


@dataclass(frozen=True)
class BenchmarkRecord:
    """One benchmark cell; written even when the solve did not converge."""

    family: str
    m: int
    n: int
    seed: int
    status: str
    iters: int
    total_s: float
    fact_s: float
    proj_s: float
    objective: float
    r_norm: float
    s_norm: float

    def csv_row(self) -> str:
        return (
            f"{self.family},{self.m},{self.n},{self.seed},{self.status},"
            f"{self.iters},{self.total_s:.6f},{self.fact_s:.6f},{self.proj_s:.6f},"
            f"{self.objective:.10g},{self.r_norm:.6g},{self.s_norm:.6g}"
        )


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cvqp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ps = sub.add_parser("solve", help="solve one problem from a JSON file")
    ps.add_argument("file", help="problem in the JSON interchange format")
    ps.add_argument("--eps-abs", type=float, default=1e-4)
    ps.add_argument("--eps-rel", type=float, default=1e-3)
    ps.add_argument("--rho0", type=float, default=1e-2)
    ps.add_argument("--alpha", type=float, default=1.7)
    ps.add_argument("--max-iter", type=int, default=100_000)
    ps.add_argument("--time-limit", type=float, default=None,
                    help="wall-clock cap in seconds (default: none)")
    ps.add_argument("--no-adaptive-rho", action="store_true",
                    help="keep the penalty fixed at rho0")

    pb = sub.add_parser("bench", help="run a benchmark family to CSV")
    pb.add_argument("family", choices=FAMILIES)
    pb.add_argument("--m", type=_size, nargs="+", required=True,
                    help="scenario counts, e.g. --m 1e4 1e5")
    pb.add_argument("--n", type=_size, default=100,
                    help="assets (portfolio) or features (quantile); ignored "
                         "by the projection family")
    pb.add_argument("--seeds", type=int, default=1, metavar="K",
                    help="run seeds 0..K-1 per size")
    pb.add_argument("--eta", type=float, default=0.5,
                    help="projection difficulty in (0,1)")
    pb.add_argument("--beta", type=float, default=0.95)
    pb.add_argument("--kappa", type=float, default=0.3)
    pb.add_argument("--tau", type=float, default=0.9)
    pb.add_argument("--out", required=True, help="CSV path (appended)")
    pb.add_argument("--dump", metavar="DIR", default=None,
                    help="also write each instance as JSON into DIR")
    pb.add_argument("--parallel", type=int, default=1, metavar="N",
                    help="solve cells concurrently (capped by CVQP_THREADS)")
    pb.add_argument("--time-limit", type=float, default=None)
    return parser


def _size(text: str) -> int:
    """Sizes may be written as integers or scientific floats (1e5)."""
    value = int(float(text))
    if value < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text}")
    return value


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def _cmd_solve(args) -> int:
    try:
        problem = load_problem(args.file)
    except (OSError, ValueError) as exc:
        print(f"cvqp solve: {exc}", file=sys.stderr)
        return 1
    try:
        settings = SolverSettings(
            rho0=args.rho0,
            alpha=args.alpha,
            eps_abs=args.eps_abs,
            eps_rel=args.eps_rel,
            max_iter=args.max_iter,
            time_limit=args.time_limit,
            adaptive_rho=not args.no_adaptive_rho,
        )
        result = solve(problem, settings)
    except (CvqpError, ValueError) as exc:
        print(f"cvqp solve: {exc}", file=sys.stderr)
        return 1

    last = result.history[-1] if result.history else None
    summary = {
        "status": result.status.value,
        "objective": _finite_or_none(result.objective),
        "iterations": result.iterations,
        "r_norm": _finite_or_none(last.r_norm) if last else None,
        "s_norm": _finite_or_none(last.s_norm) if last else None,
        "eps_pri": _finite_or_none(last.eps_pri) if last else None,
        "eps_dual": _finite_or_none(last.eps_dual) if last else None,
        "rho": last.rho if last else None,
        "timings": {
            "factorization_s": result.timings.factorization_s,
            "projection_s": result.timings.projection_s,
            "total_s": result.timings.total_s,
        },
        "x": result.x.tolist(),
    }
    print(json.dumps(summary))
    if result.status == Status.OPTIMAL:
        return 0
    if result.status in (Status.MAX_ITERATIONS, Status.TIME_LIMIT):
        return 2
    return 1


def _projection_problem(v: np.ndarray, k: int, d: float) -> CvqpProblem:
    """The projection instance as a CVQP, for --dump interchange.

    minimize (1/2)||x - v||^2 (up to a constant) subject to the same
    sum-of-k-largest bound, written with A = I.  Only sensible at small m;
    the JSON holds the dense identity.
    """
    m = v.size
    return CvqpProblem(
        P=np.ones(m),
        q=-v,
        A=np.eye(m),
        B=np.zeros((0, m)),
        l=np.zeros(0),
        u=np.zeros(0),
        beta=1.0 - k / m,
        kappa=d / k,
    )


def _run_cell(args, m: int, seed: int) -> BenchmarkRecord:
    family = args.family
    settings = SolverSettings(time_limit=args.time_limit)
    if family == "projection":
        config = ProjectionConfig(m=m, beta=args.beta, eta=args.eta, seed=seed)
        v, spec = gen_projection(config)
        if args.dump:
            dump_problem(_projection_problem(v, spec.k, spec.d),
                         Path(args.dump) / f"projection_m{m}_seed{seed}.json")
        t0 = time.perf_counter()
        z, info = project_sum_k_largest(v, spec, return_info=True)
        wall = time.perf_counter() - t0
        return BenchmarkRecord(
            family=family, m=m, n=0, seed=seed,
            status=Status.OPTIMAL.value,
            iters=info.steps,
            total_s=wall, fact_s=0.0, proj_s=wall,
            objective=0.5 * float(np.sum((z - v) ** 2)),
            r_norm=sum_k_largest(z, spec.k) - spec.d,
            s_norm=0.0,
        )

    if family == "portfolio":
        problem = gen_portfolio(PortfolioConfig(
            n_assets=args.n, m_scenarios=m, beta=args.beta, kappa=args.kappa,
            seed=seed,
        ))
    else:
        problem = gen_quantile(QuantileConfig(
            n_features=args.n, m_samples=m, tau=args.tau, seed=seed,
        ))
    if args.dump:
        dump_problem(problem, Path(args.dump) / f"{family}_m{m}_seed{seed}.json")
    result = solve(problem, settings)
    last = result.history[-1] if result.history else None
    return BenchmarkRecord(
        family=family, m=m, n=args.n, seed=seed,
        status=result.status.value,
        iters=result.iterations,
        total_s=result.timings.total_s,
        fact_s=result.timings.factorization_s,
        proj_s=result.timings.projection_s,
        objective=result.objective,
        r_norm=last.r_norm if last else math.nan,
        s_norm=last.s_norm if last else math.nan,
    )


def _cmd_bench(args) -> int:
    if args.dump:
        try:
            Path(args.dump).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            print(f"cvqp bench: {exc}", file=sys.stderr)
            return 1

    cells = [(m, seed) for m in args.m for seed in range(args.seeds)]
    workers = max(1, args.parallel)
    cap = os.environ.get("CVQP_THREADS")
    if cap is not None:
        workers = min(workers, max(1, int(cap)))

    if workers == 1:
        records = [_run_cell(args, m, seed) for m, seed in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda c: _run_cell(args, *c), cells))

    try:
        path = Path(args.out)
        fresh = not path.exists() or path.stat().st_size == 0
        with open(path, "a") as fh:
            if fresh:
                fh.write(CSV_HEADER + "\n")
            for record in records:
                fh.write(record.csv_row() + "\n")
    except OSError as exc:
        print(f"cvqp bench: {exc}", file=sys.stderr)
        return 1

    for m in args.m:
        group = [r.total_s for r in records if r.m == m]
        print(f"m={m}: mean total {np.mean(group):.6f} s over {len(group)} runs")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if args.command == "solve":
        return _cmd_solve(args)
    return _cmd_bench(args)


if __name__ == "__main__":
    sys.exit(main())
