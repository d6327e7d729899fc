"""l1-Jacobi smoothing and V/W cycles over a :class:`Hierarchy`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coarsening import Hierarchy
from .sparse import CsrMatrix, spmv

__all__ = ["CycleConfig", "l1_jacobi_sweeps", "vcycle", "wcycle", "AMGPreconditioner"]


@dataclass(frozen=True)
class CycleConfig:
    cycle: str = "V"
    pre_sweeps: int = 1
    post_sweeps: int = 1
    coarsest_sweeps: int = 20

    def __post_init__(self):
        object.__setattr__(self, "cycle", self.cycle.upper())
        if self.cycle not in ("V", "W"):
            raise ValueError(f"cycle must be 'V' or 'W', got {self.cycle!r}")
        if self.pre_sweeps < 0 or self.post_sweeps < 0:
            raise ValueError("sweep counts must be >= 0")
        if self.coarsest_sweeps < 1:
            raise ValueError("coarsest_sweeps must be >= 1")


def l1_jacobi_sweeps(A: CsrMatrix, d, b, x, k: int) -> np.ndarray:
    """``k`` sweeps of ``x <- x + D^{-1}(b - A x)`` with the l1 diagonal ``d``.

    Returns a new array; ``x`` is not modified.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.array(x, dtype=np.float64)
    if b.shape != (A.nrows,) or x.shape != (A.ncols,) or np.shape(d) != (A.nrows,):
        raise ValueError("dimension mismatch in l1_jacobi_sweeps")
    y = np.empty(A.nrows)
    for _ in range(k):
        spmv(A, x, out=y)
        x += (b - y) / d
    return x


def _post_smooth(A: CsrMatrix, d, b, x, k: int) -> np.ndarray:
    # M^{-T} = M^{-1} for a diagonal smoother: the post-smoothing step reuses
    # the same routine.
    return l1_jacobi_sweeps(A, d, b, x, k)


def _cycle(h: Hierarchy, level: int, b, x, cfg: CycleConfig, gamma: int) -> np.ndarray:
    lev = h.levels[level]
    if level == h.nl - 1:
        return l1_jacobi_sweeps(lev.A, lev.l1_diag, b, x, cfg.coarsest_sweeps)
    x = l1_jacobi_sweeps(lev.A, lev.l1_diag, b, x, cfg.pre_sweeps)
    bc = spmv(lev.R, b - spmv(lev.A, x))
    xc = np.zeros(lev.R.nrows)
    # the coarsest solve is visited once, so gamma only matters above it
    visits = 1 if level + 1 == h.nl - 1 else gamma
    for _ in range(visits):
        xc = _cycle(h, level + 1, bc, xc, cfg, gamma)
    x += spmv(lev.P, xc)
    return _post_smooth(lev.A, lev.l1_diag, b, x, cfg.post_sweeps)


def _entry(h: Hierarchy, level: int, b, x):
    if not 0 <= level < h.nl:
        raise IndexError(f"level {level} out of range for a {h.nl}-level hierarchy")
    n = h.levels[level].n
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"right-hand side has shape {b.shape}, level {level} has size {n}")
    x = np.zeros(n) if x is None else np.array(x, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"initial guess has shape {x.shape}, level {level} has size {n}")
    return b, x


def vcycle(h: Hierarchy, level: int, b, x=None, cfg: CycleConfig | None = None) -> np.ndarray:
    """Symmetric V-cycle starting at ``level`` (0 is the finest).

    Pre-smooth, restrict the freshly computed residual, recurse with a zero
    guess, prolongate the correction and post-smooth. The coarsest level is
    handled by ``coarsest_sweeps`` l1-Jacobi sweeps.
    """
    b, x = _entry(h, level, b, x)
    return _cycle(h, level, b, x, cfg or CycleConfig(), 1)


def wcycle(h: Hierarchy, level: int, b, x=None, cfg: CycleConfig | None = None) -> np.ndarray:
    """W-cycle: two coarse-grid visits at every level above the coarsest
    correction, so it coincides with the V-cycle for two-level hierarchies."""
    b, x = _entry(h, level, b, x)
    return _cycle(h, level, b, x, cfg or CycleConfig(cycle="W"), 2)


class AMGPreconditioner:
    """One cycle with zero initial guess, as a callable ``r -> B(r)``."""

    def __init__(self, hierarchy: Hierarchy, cfg: CycleConfig | None = None):
        self.hierarchy = hierarchy
        self.cfg = cfg or CycleConfig()
        self._gamma = 2 if self.cfg.cycle == "W" else 1

    def __call__(self, r) -> np.ndarray:
        b, x = _entry(self.hierarchy, 0, r, None)
        return _cycle(self.hierarchy, 0, b, x, self.cfg, self._gamma)
