"""Command-line driver: ``matchamg solve`` and ``matchamg bench``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
import time

import numpy as np

from .coarsening import SetupConfig, build_hierarchy, build_prolongator, hierarchy_stats, pairwise_aggregate
from .krylov import PCGBreakdown, SolveConfig, dot, fused_axpy_pairs, fused_triple_dot, pcg_solve
from .matching import build_weights, suitor_match
from .mmio import MatrixMarketError, read_matrix_market, read_vector
from .multigrid import AMGPreconditioner, CycleConfig
from .problems import parse_generator
from .sparse import ADMISSIBLE_GROUP_SIZES, LaneGroupPolicy, spmv, spmv_serial

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_BREAKDOWN = 3
EXIT_INPUT = 4

SOLVE_COLUMNS = [
    "matrix", "n", "nnz", "cycle", "tbuild_ms", "it", "tsolve_ms", "relres",
    "converged", "nl", "vcmplx", "cratio", "status",
]
BENCH_COLUMNS = ["section", "name", "group_size", "auto", "median_ms", "speedup", "max_rel_diff"]


class InputError(Exception):
    """Bad configuration or unreadable input (exit code 4)."""


def _add_matrix_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", metavar="PATH", help="MatrixMarket coordinate file")
    src.add_argument("--gen", metavar="SPEC", help="generator, e.g. ani:128,128,0.001,0")
    p.add_argument("--out", choices=["table", "csv", "json"], default="table")
    p.add_argument("--report", metavar="PATH", help="also write the report to this file")
    p.add_argument("--threads", type=int, default=None, help="numba threads (default: all cores)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matchamg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="set up the AMG hierarchy and run preconditioned CG")
    _add_matrix_args(s)
    s.add_argument("--cycle", type=str.lower, choices=["v", "w"], default="v")
    s.add_argument("--pre", type=int, default=1)
    s.add_argument("--post", type=int, default=1)
    s.add_argument("--coarsest-sweeps", type=int, default=20)
    s.add_argument("--rtol", type=float, default=1e-6)
    s.add_argument("--itmax", type=int, default=5000)
    s.add_argument("--max-levels", type=int, default=40)
    s.add_argument("--coarse-factor", type=float, default=40.0)
    s.add_argument("--agg", choices=["pair", "double"], default="double")
    s.add_argument("--wvec", default="ones", help="'ones' or a vector file (.npy or text)")
    s.add_argument("--rhs", default="ones", help="'ones', 'random' or a vector file")

    b = sub.add_parser("bench", help="time the lane-group SpMV and fused CG kernels")
    _add_matrix_args(b)
    b.add_argument("--repeat", type=int, default=7, help="timings per kernel (median reported)")
    b.add_argument("--vector-size", type=int, default=100_000)
    return parser


def _load_matrix(args):
    if args.matrix:
        if not os.path.exists(args.matrix):
            raise InputError(f"matrix file not found: {args.matrix}")
        try:
            return read_matrix_market(args.matrix), args.matrix
        except (OSError, MatrixMarketError) as exc:
            raise InputError(str(exc)) from exc
    try:
        return parse_generator(args.gen), args.gen
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _load_vector(spec: str, n: int, rng) -> np.ndarray:
    if spec == "ones":
        return np.ones(n)
    if spec == "random":
        return rng.standard_normal(n)
    try:
        v = read_vector(spec)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read vector {spec}: {exc}") from exc
    if v.shape != (n,):
        raise InputError(f"vector {spec} has length {v.size}, matrix has {n} rows")
    return v


def _emit(rows: list[dict], columns: list[str], fmt: str, extra: dict | None = None, single: bool = False) -> str:
    if fmt == "json":
        payload = {c: r.get(c) for r in rows[:1] for c in columns} if single else {"rows": rows}
        payload.update(extra or {})
        return json.dumps(payload, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    widths = {c: max(len(c), *(len(_fmt_cell(r.get(c))) for r in rows)) for c in columns}
    lines = ["  ".join(c.rjust(widths[c]) for c in columns)]
    for r in rows:
        lines.append("  ".join(_fmt_cell(r.get(c)).rjust(widths[c]) for c in columns))
    return "\n".join(lines) + "\n"


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.3e}" if (v != 0 and abs(v) < 1e-2) else f"{v:.2f}"
    return "" if v is None else str(v)


def _write(text: str, args) -> None:
    sys.stdout.write(text)
    if args.report:
        try:
            with open(args.report, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise InputError(f"cannot write report {args.report}: {exc}") from exc


def run_solve(args) -> int:
    try:
        setup_cfg = SetupConfig(args.max_levels, args.coarse_factor, args.agg)
        cycle_cfg = CycleConfig(args.cycle, args.pre, args.post, args.coarsest_sweeps)
        solve_cfg = SolveConfig(args.rtol, args.itmax)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    A, label = _load_matrix(args)
    rng = np.random.default_rng(args.seed)
    w = _load_vector(args.wvec, A.nrows, rng)
    b = _load_vector(args.rhs, A.nrows, rng)

    t0 = time.perf_counter()
    try:
        h = build_hierarchy(A, w, setup_cfg)
    except ValueError as exc:
        raise InputError(f"setup failed: {exc}") from exc
    tbuild = time.perf_counter() - t0
    nl, vcmplx, cratio = hierarchy_stats(h)
    row = {
        "matrix": label, "n": A.nrows, "nnz": A.nnz, "cycle": cycle_cfg.cycle,
        "tbuild_ms": tbuild * 1e3, "nl": nl, "vcmplx": vcmplx, "cratio": cratio,
    }
    status = EXIT_OK
    report = None
    try:
        _, report = pcg_solve(A, b, AMGPreconditioner(h, cycle_cfg), cfg=solve_cfg)
        row.update(
            it=report.iterations, tsolve_ms=report.solve_time * 1e3, relres=report.final_relres,
            converged=report.converged, status="converged" if report.converged else "not-converged",
        )
        if not report.converged:
            status = EXIT_NOT_CONVERGED
    except PCGBreakdown as exc:
        row.update(it=exc.iteration, converged=False, status="breakdown")
        print(str(exc), file=sys.stderr)
        status = EXIT_BREAKDOWN

    extra = None
    if args.out == "json":
        extra = {
            "level_sizes": h.stats.sizes,
            "level_nnz": h.stats.nnz,
            "stalled": h.stats.stalled,
            "tie_break": h.stats.tie_break,
            "residual_history": [] if report is None else [float(x) for x in report.residual_history],
        }
    _write(_emit([row], SOLVE_COLUMNS, args.out, extra, single=True), args)
    return status


def _median_ms(fn, repeat: int) -> float:
    fn()  # warm-up / JIT
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1e3


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.max(np.abs(b)) or 1.0
    return float(np.max(np.abs(a - b)) / scale)


def run_bench(args) -> int:
    A, label = _load_matrix(args)
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal(A.ncols)
    rows = []

    ref = spmv_serial(A, x)
    t_serial = _median_ms(lambda: spmv_serial(A, x), args.repeat)
    auto = LaneGroupPolicy.for_matrix(A).group_size
    rows.append(dict(section="spmv", name="row-serial", group_size="", auto="", median_ms=t_serial,
                     speedup=1.0, max_rel_diff=0.0))
    for g in ADMISSIBLE_GROUP_SIZES:
        pol = LaneGroupPolicy(g)
        y = spmv(A, x, pol)
        t = _median_ms(lambda: spmv(A, x, pol), args.repeat)
        rows.append(dict(section="spmv", name=label, group_size=g, auto=g == auto, median_ms=t,
                         speedup=t_serial / t, max_rel_diff=_rel(y, ref)))

    # prolongator of one matching step: one entry per row
    if A.nrows == A.ncols:
        try:
            agg = pairwise_aggregate(suitor_match(build_weights(A, np.ones(A.nrows))), A.nrows)
            P = build_prolongator(agg, np.ones(A.nrows))
            xc = rng.standard_normal(P.ncols)
            pol = LaneGroupPolicy.for_matrix(P)
            t_ser = _median_ms(lambda: spmv_serial(P, xc), args.repeat)
            t = _median_ms(lambda: spmv(P, xc, pol), args.repeat)
            rows.append(dict(section="spmv", name="prolongator", group_size=pol.group_size, auto=True,
                             median_ms=t, speedup=t_ser / t,
                             max_rel_diff=_rel(spmv(P, xc, pol), spmv_serial(P, xc))))
        except ValueError as exc:
            print(f"skipping prolongator bench: {exc}", file=sys.stderr)

    m = args.vector_size
    w, r, v, q = (rng.standard_normal(m) for _ in range(4))
    fused = fused_triple_dot(w, r, v, q)
    separate = (dot(w, r), dot(w, v), dot(w, q))
    t_f = _median_ms(lambda: fused_triple_dot(w, r, v, q), args.repeat)
    t_s = _median_ms(lambda: (dot(w, r), dot(w, v), dot(w, q)), args.repeat)
    rows.append(dict(section="reduction", name="three-dots", group_size="", auto="", median_ms=t_s,
                     speedup=1.0, max_rel_diff=0.0))
    rows.append(dict(section="reduction", name="fused-triple-dot", group_size="", auto="", median_ms=t_f,
                     speedup=t_s / t_f,
                     max_rel_diff=max(abs(f - s) / abs(s) for f, s in zip(fused, separate))))

    d0, q0, u0, r0 = (rng.standard_normal(m) for _ in range(4))
    s, t = 0.3, 0.7

    def unfused():
        d = w - s * d0
        u = u0 + t * d
        qq = v - s * q0
        rr = r0 - t * qq
        return d, u, qq, rr

    def fused_pairs():
        d, qq, u, rr = d0.copy(), q0.copy(), u0.copy(), r0.copy()
        fused_axpy_pairs(w, v, d, qq, u, rr, s, t)
        return d, u, qq, rr

    diff = max(_rel(a, b) for a, b in zip(fused_pairs(), unfused()))
    t_u = _median_ms(unfused, args.repeat)
    t_p = _median_ms(fused_pairs, args.repeat)
    rows.append(dict(section="axpy", name="unfused", group_size="", auto="", median_ms=t_u,
                     speedup=1.0, max_rel_diff=0.0))
    rows.append(dict(section="axpy", name="paired", group_size="", auto="", median_ms=t_p,
                     speedup=t_u / t_p, max_rel_diff=diff))

    _write(_emit(rows, BENCH_COLUMNS, args.out), args)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        import numba

        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_INPUT
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        if args.command == "solve":
            return run_solve(args)
        return run_bench(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
