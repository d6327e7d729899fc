"""Matching-based aggregation and construction of the multilevel hierarchy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .matching import UNMATCHED, Matching, build_weights, suitor_match
from .sparse import CsrMatrix, galerkin_triple, l1_diagonal, spgemm, spmv, transpose

__all__ = [
    "Aggregation",
    "Level",
    "Hierarchy",
    "HierarchyStats",
    "SetupConfig",
    "pairwise_aggregate",
    "build_prolongator",
    "restrict_vector",
    "pairwise_step",
    "double_pairwise",
    "galerkin_by_aggregates",
    "build_hierarchy",
    "hierarchy_stats",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Aggregation:
    agg_of: np.ndarray
    n_c: int
    n_p: int
    n_s: int

    @property
    def n(self) -> int:
        return int(self.agg_of.size)

    def members(self) -> list[list[int]]:
        groups: list[list[int]] = [[] for _ in range(self.n_c)]
        for i, a in enumerate(self.agg_of):
            groups[a].append(i)
        return groups


def pairwise_aggregate(M: Matching, n: int | None = None) -> Aggregation:
    """Turn a matching into aggregates of size one or two.

    Vertices are visited in ascending order; a vertex opens a new aggregate
    together with its mate if the mate is still unassigned, otherwise alone.
    Aggregate ids therefore follow the smallest member index.
    """
    mate = M.mate
    n = mate.size if n is None else n
    if mate.size != n:
        raise ValueError(f"matching has {mate.size} vertices, expected {n}")
    agg_of = np.full(n, -1, dtype=np.int64)
    n_p = n_s = 0
    nc = 0
    for i in range(n):
        if agg_of[i] != -1:
            continue
        j = mate[i]
        if j != UNMATCHED and agg_of[j] == -1:
            agg_of[i] = agg_of[j] = nc
            n_p += 1
        else:
            agg_of[i] = nc
            n_s += 1
        nc += 1
    return Aggregation(agg_of, nc, n_p, n_s)


def build_prolongator(agg: Aggregation, w) -> CsrMatrix:
    """Piecewise-constant prolongator from the smooth vector.

    Row ``i`` has its single entry in column ``agg_of[i]`` with value
    ``w_i / ||w restricted to that aggregate||``, so every column has unit
    norm. A singleton with ``w_i = 0`` gets the entry 1.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (agg.n,):
        raise ValueError(f"smooth vector has shape {w.shape}, expected ({agg.n},)")
    sq = np.bincount(agg.agg_of, weights=w * w, minlength=agg.n_c)
    sizes = np.bincount(agg.agg_of, minlength=agg.n_c)
    norms = np.sqrt(sq)
    dead = np.flatnonzero(norms == 0.0)
    if np.any(sizes[dead] > 1):
        bad = int(dead[sizes[dead] > 1][0])
        raise ValueError(f"smooth vector vanishes on aggregate {bad}")
    vals = np.empty(agg.n)
    alive = norms[agg.agg_of] > 0.0
    vals[alive] = w[alive] / norms[agg.agg_of[alive]]
    vals[~alive] = 1.0
    return CsrMatrix(agg.n, agg.n_c, np.arange(agg.n + 1), agg.agg_of.copy(), vals)


def restrict_vector(P: CsrMatrix, w) -> np.ndarray:
    """Coarse smooth vector ``P^T w``."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (P.nrows,):
        raise ValueError(f"vector has shape {w.shape}, prolongator has {P.nrows} rows")
    return spmv(transpose(P), w)


def _single_entry_rows(P: CsrMatrix) -> None:
    lengths = P.row_lengths()
    bad = np.flatnonzero(lengths != 1)
    if bad.size:
        raise ValueError(f"prolongator row {int(bad[0])} has {int(lengths[bad[0]])} entries, expected 1")


def galerkin_by_aggregates(A: CsrMatrix, P: CsrMatrix) -> CsrMatrix:
    """P^T A P for a prolongator with one entry per row.

    Each fine entry ``a_ij`` lands in coarse position
    ``(agg(i), agg(j))`` scaled by ``p_i p_j``; the coarse matrix is the sum
    of those contributions, formed by sorting coarse keys.
    """
    if A.nrows != A.ncols or P.nrows != A.nrows:
        raise ValueError(f"dimension mismatch: A is {A.shape}, P is {P.shape}")
    _single_entry_rows(P)
    agg = P.col_idx
    p = P.values
    rows = A.row_of_entries()
    cols = A.col_idx
    nc = P.ncols
    contrib = p[rows] * A.values * p[cols]
    keys = agg[rows] * nc + agg[cols]
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    if keys.size == 0:
        return CsrMatrix(nc, nc, np.zeros(nc + 1, dtype=np.int64), keys, np.zeros(0))
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    vals = np.add.reduceat(contrib[order], starts)
    uk = keys[starts]
    crow, ccol = uk // nc, uk % nc
    row_ptr = np.zeros(nc + 1, dtype=np.int64)
    np.cumsum(np.bincount(crow, minlength=nc), out=row_ptr[1:])
    return CsrMatrix(nc, nc, row_ptr, ccol, vals)


def _galerkin(A: CsrMatrix, P: CsrMatrix, path: str) -> CsrMatrix:
    if path == "aggregates":
        return galerkin_by_aggregates(A, P)
    if path == "spgemm":
        return galerkin_triple(A, P)
    raise ValueError(f"unknown Galerkin path {path!r}")


@dataclass
class StepInfo:
    n_p: int = 0
    n_s: int = 0
    zero_weight_edges: int = 0


def pairwise_step(A: CsrMatrix, w, galerkin: str = "aggregates"):
    """One matching-based pairwise aggregation step.

    Returns ``(P, A_coarse, w_coarse, info)``.
    """
    G = build_weights(A, w)
    M = suitor_match(G)
    agg = pairwise_aggregate(M, A.nrows)
    P = build_prolongator(agg, w)
    Ac = _galerkin(A, P, galerkin)
    wc = spmv(transpose(P), w)
    return P, Ac, wc, StepInfo(agg.n_p, agg.n_s, G.zero_denominators)


def _coarsen(A: CsrMatrix, w, steps: int, galerkin: str):
    w = np.asarray(w, dtype=np.float64)
    if A.nrows <= 1:
        return CsrMatrix.identity(A.nrows), A, w.copy(), []
    P, Ac, wc, info = pairwise_step(A, w, galerkin)
    infos = [info]
    if steps == 2 and info.n_p > 0 and Ac.nrows > 1:
        P2, Ac2, wc2, info2 = pairwise_step(Ac, wc, galerkin)
        infos.append(info2)
        if info2.n_p > 0:
            P, Ac, wc = spgemm(P, P2), Ac2, wc2
    return P, Ac, wc, infos


def double_pairwise(A: CsrMatrix, w, galerkin: str = "aggregates"):
    """Two composed pairwise steps: aggregates of up to four fine indices.

    The second step re-weights the first coarse matrix with the restricted
    smooth vector. Returns ``(P, A_coarse, w_coarse)`` with ``P = P1 P2``.
    """
    P, Ac, wc, _ = _coarsen(A, w, 2, galerkin)
    return P, Ac, wc


@dataclass(frozen=True)
class SetupConfig:
    max_levels: int = 40
    coarse_factor: float = 40.0
    aggregation: str = "double"
    galerkin: str = "aggregates"

    def __post_init__(self):
        if self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")
        if self.coarse_factor <= 0:
            raise ValueError("coarse_factor must be positive")
        if self.aggregation not in ("pair", "double"):
            raise ValueError(f"aggregation must be 'pair' or 'double', got {self.aggregation!r}")
        if self.galerkin not in ("aggregates", "spgemm"):
            raise ValueError(f"galerkin must be 'aggregates' or 'spgemm', got {self.galerkin!r}")

    def coarsest_bound(self, n: int) -> float:
        return self.coarse_factor * n ** (1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class Level:
    A: CsrMatrix
    P: CsrMatrix | None
    R: CsrMatrix | None
    l1_diag: np.ndarray
    w: np.ndarray

    @property
    def n(self) -> int:
        return self.A.nrows


@dataclass
class HierarchyStats:
    sizes: list[int] = field(default_factory=list)
    nnz: list[int] = field(default_factory=list)
    pairs: list[int] = field(default_factory=list)
    singletons: list[int] = field(default_factory=list)
    zero_weight_edges: int = 0
    stalled: bool = False
    capped: bool = False
    coarsest_bound: float = 0.0
    tie_break: str = "lower-index"


@dataclass(frozen=True, eq=False)
class Hierarchy:
    levels: list[Level]
    stats: HierarchyStats
    config: SetupConfig

    @property
    def nl(self) -> int:
        return len(self.levels)


def build_hierarchy(A: CsrMatrix, w=None, cfg: SetupConfig | None = None) -> Hierarchy:
    """Setup phase: coarsen until the coarsest size bound or the level cap.

    The bound on the coarsest size is ``coarse_factor * n^(1/3)`` for the
    fine dimension ``n``. Coarsening also stops if a step fails to match any
    pair, in which case ``stats.stalled`` is set.
    """
    cfg = cfg or SetupConfig()
    if A.nrows != A.ncols:
        raise ValueError("matrix must be square")
    if not A.pattern_equal(transpose(A)):
        raise ValueError("matrix pattern is not symmetric")
    w = np.ones(A.nrows) if w is None else np.asarray(w, dtype=np.float64)
    if w.shape != (A.nrows,):
        raise ValueError(f"smooth vector has shape {w.shape}, expected ({A.nrows},)")

    stats = HierarchyStats(coarsest_bound=cfg.coarsest_bound(A.nrows))
    steps = 2 if cfg.aggregation == "double" else 1
    levels: list[Level] = []
    Ak, wk = A, w
    while True:
        stats.sizes.append(Ak.nrows)
        stats.nnz.append(Ak.nnz)
        d = l1_diagonal(Ak)
        if Ak.nrows <= stats.coarsest_bound:
            break
        if len(levels) + 1 >= cfg.max_levels:
            stats.capped = True
            break
        P, Ac, wc, infos = _coarsen(Ak, wk, steps, cfg.galerkin)
        for info in infos:
            stats.pairs.append(info.n_p)
            stats.singletons.append(info.n_s)
            stats.zero_weight_edges += info.zero_weight_edges
        if Ac.nrows == Ak.nrows:
            stats.stalled = True
            log.warning("coarsening stalled at level %d (n=%d)", len(levels) + 1, Ak.nrows)
            break
        levels.append(Level(Ak, P, transpose(P), d, wk))
        Ak, wk = Ac, wc
    levels.append(Level(Ak, None, None, d, wk))
    return Hierarchy(levels, stats, cfg)


def hierarchy_stats(h: Hierarchy) -> tuple[int, float, float]:
    """``(nl, Vcmplx, cratio)``.

    Vcmplx is the summed nnz over all levels relative to the finest level.
    cratio sums the size ratios of consecutive levels and divides by ``nl``
    (not ``nl - 1``), so a single-level hierarchy reports 0.
    """
    nnz = [lev.A.nnz for lev in h.levels]
    sizes = [lev.n for lev in h.levels]
    nl = len(sizes)
    vcmplx = sum(nnz) / nnz[0]
    cratio = sum(sizes[k - 1] / sizes[k] for k in range(1, nl)) / nl
    return nl, vcmplx, cratio
