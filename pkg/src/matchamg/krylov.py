"""Flexible preconditioned conjugate gradient with fused vector kernels.

The iteration is the reordered variant in which the three inner products of
an iteration share one pass over the preconditioned residual ``w`` and the
four vector updates are done as two paired AXPY passes.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from numba import njit, prange

from .sparse import CsrMatrix, spmv

__all__ = [
    "SolveConfig",
    "SolveReport",
    "PCGBreakdown",
    "dot",
    "fused_triple_dot",
    "axpy_pair",
    "fused_axpy_pairs",
    "pcg_solve",
]

log = logging.getLogger(__name__)

REDUCTION_BLOCK = 4096
AUDIT_EVERY = 50
AUDIT_TOL = 1e-10


class PCGBreakdown(RuntimeError):
    """Non-positive or non-finite curvature; A or B is not s.p.d."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"PCG breakdown at iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class SolveConfig:
    rtol: float = 1e-6
    itmax: int = 5000

    def __post_init__(self):
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")
        if self.itmax < 1:
            raise ValueError("itmax must be >= 1")


@dataclass
class SolveReport:
    iterations: int
    final_relres: float
    residual_history: np.ndarray
    converged: bool
    setup_time: float = 0.0
    solve_time: float = 0.0
    audit_max: float = 0.0
    audit_failed: bool = False
    hierarchy: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["residual_history"] = [float(v) for v in self.residual_history]
        return out


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


@njit(cache=True)
def _dot_seq(x, y):
    s = 0.0
    for i in range(x.size):
        s += x[i] * y[i]
    return s


@njit(cache=True)
def _triple_seq(w, r, v, q):
    a = 0.0
    b = 0.0
    c = 0.0
    for i in range(w.size):
        wi = w[i]
        a += wi * r[i]
        b += wi * v[i]
        c += wi * q[i]
    return a, b, c


@njit(cache=True)
def _pairwise_sum(parts):
    m = parts.size
    buf = parts.copy()
    while m > 1:
        half = (m + 1) // 2
        for i in range(m // 2):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
        if m % 2:
            buf[half - 1] = buf[m - 1]
        m = half
    return buf[0] if parts.size else 0.0


@njit(cache=True, parallel=True)
def _dot_blocked(x, y, block):
    nb = (x.size + block - 1) // block
    parts = np.zeros(nb)
    for b in prange(nb):
        s = 0.0
        for i in range(b * block, min(x.size, (b + 1) * block)):
            s += x[i] * y[i]
        parts[b] = s
    return _pairwise_sum(parts)


@njit(cache=True, parallel=True)
def _triple_blocked(w, r, v, q, block):
    nb = (w.size + block - 1) // block
    pa = np.zeros(nb)
    pb = np.zeros(nb)
    pc = np.zeros(nb)
    for b in prange(nb):
        a = 0.0
        bb = 0.0
        c = 0.0
        for i in range(b * block, min(w.size, (b + 1) * block)):
            wi = w[i]
            a += wi * r[i]
            bb += wi * v[i]
            c += wi * q[i]
        pa[b] = a
        pb[b] = bb
        pc[b] = c
    return _pairwise_sum(pa), _pairwise_sum(pb), _pairwise_sum(pc)


def _as_vectors(*vs):
    out = [np.ascontiguousarray(v, dtype=np.float64) for v in vs]
    n = out[0].shape
    if any(v.shape != n or v.ndim != 1 for v in out):
        raise ValueError("vectors must be 1-D with equal lengths")
    return out


def dot(x, y, blocked: bool = True) -> float:
    """Inner product with the same reduction order as :func:`fused_triple_dot`."""
    x, y = _as_vectors(x, y)
    if blocked:
        return float(_dot_blocked(x, y, REDUCTION_BLOCK))
    return float(_dot_seq(x, y))


def fused_triple_dot(w, r, v, q, blocked: bool = True) -> tuple[float, float, float]:
    """``(w.r, w.v, w.q)`` in a single traversal of ``w``.

    ``blocked=True`` reduces fixed-size blocks in parallel and combines the
    block sums pairwise; ``blocked=False`` is a plain sequential loop. Either
    way each component matches :func:`dot` with the same flag bit for bit.
    """
    w, r, v, q = _as_vectors(w, r, v, q)
    if blocked:
        a, b, c = _triple_blocked(w, r, v, q, REDUCTION_BLOCK)
    else:
        a, b, c = _triple_seq(w, r, v, q)
    return float(a), float(b), float(c)


# ---------------------------------------------------------------------------
# paired AXPY
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def _axpy_pair(src, first, second, s, t):
    for i in prange(src.size):
        f = src[i] - s * first[i]
        first[i] = f
        second[i] = second[i] + t * f


def axpy_pair(src, first, second, s: float, t: float) -> None:
    """In place: ``first = src - s*first`` then ``second = second + t*first``.

    The new ``first`` entry is reused straight away for ``second``.
    """
    if not (src.shape == first.shape == second.shape):
        raise ValueError("vectors must have equal lengths")
    _axpy_pair(src, first, second, float(s), float(t))


def fused_axpy_pairs(w, v, d, q, u, r, s: float, t: float) -> None:
    """The four search-direction and iterate updates of one iteration::

        d = w - s d ;  u = u + t d
        q = v - s q ;  r = r - t q

    ``s`` is gamma_i / rho_{i-1} and ``t`` is alpha_i / rho_i.
    """
    axpy_pair(w, d, u, s, t)
    axpy_pair(v, q, r, s, -t)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def _identity(r):
    return r.copy()


def pcg_solve(
    A: CsrMatrix,
    b,
    precond: Callable[[np.ndarray], np.ndarray] | None = None,
    u0=None,
    cfg: SolveConfig | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
):
    """Solve ``A u = b`` with flexible preconditioned CG.

    Parameters
    ----------
    A : CsrMatrix
        Symmetric positive definite matrix.
    b : array_like
        Right-hand side.
    precond : callable, optional
        Preconditioner action ``r -> B(r)``; it may change between calls.
        Identity when omitted.
    u0 : array_like, optional
        Initial guess, zero by default.
    cfg : SolveConfig, optional
        Relative tolerance on ``||r|| / ||b||`` and iteration cap.
    callback : callable, optional
        Called as ``callback(i, u)`` after every update of the iterate.

    Returns
    -------
    u : ndarray
    report : SolveReport

    Raises
    ------
    PCGBreakdown
        If a curvature ``rho`` is non-positive or any scalar is non-finite.
    """
    cfg = cfg or SolveConfig()
    B = precond or _identity
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (A.nrows,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({A.nrows},)")
    t0 = time.perf_counter()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(A.nrows), SolveReport(0, 0.0, np.zeros(1), True)

    u = np.zeros(A.nrows) if u0 is None else np.array(u0, dtype=np.float64)
    r = b - spmv(A, u)
    history = [float(np.linalg.norm(r))]
    audit_max = 0.0

    def finish(it, converged):
        nonlocal audit_max
        audit_max = max(audit_max, _audit(A, b, u, r, bnorm))
        failed = audit_max > AUDIT_TOL
        if failed:
            log.warning("residual audit exceeded %.1e (%.3e)", AUDIT_TOL, audit_max)
        return u, SolveReport(
            it, history[-1] / bnorm, np.asarray(history), converged,
            solve_time=time.perf_counter() - t0, audit_max=audit_max, audit_failed=failed,
        )

    if history[0] <= cfg.rtol * bnorm:
        return finish(0, True)

    w = B(r)
    d = w.copy()
    v = spmv(A, w)
    q = v.copy()
    alpha = dot(w, r)
    rho = dot(w, v)
    _check(0, rho, alpha)
    t = alpha / rho
    u += t * d
    r -= t * q
    history.append(float(np.linalg.norm(r)))
    if callback:
        callback(1, u)

    it = 1
    while history[-1] > cfg.rtol * bnorm and it < cfg.itmax:
        w = B(r)
        spmv(A, w, out=v)
        alpha, beta, gamma = fused_triple_dot(w, r, v, q)
        rho_new = beta - gamma * gamma / rho
        _check(it, rho_new, alpha, beta, gamma)
        s = gamma / rho
        t = alpha / rho_new
        fused_axpy_pairs(w, v, d, q, u, r, s, t)
        rho = rho_new
        it += 1
        history.append(float(np.linalg.norm(r)))
        if callback:
            callback(it, u)
        if it % AUDIT_EVERY == 0:
            audit_max = max(audit_max, _audit(A, b, u, r, bnorm))
    return finish(it, history[-1] <= cfg.rtol * bnorm)


def _check(it, rho, *others):
    if not np.isfinite(rho) or not all(np.isfinite(x) for x in others):
        raise PCGBreakdown(it, "non-finite scalar")
    if rho <= 0.0:
        raise PCGBreakdown(it, f"rho = {rho:.3e} <= 0")


def _audit(A, b, u, r, bnorm):
    return float(np.linalg.norm(r - (b - spmv(A, u))) / bnorm)
