"""Model problem generators on structured grids."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sparse import CsrMatrix

__all__ = [
    "AniSpec",
    "RandPermSpec",
    "gen_anisotropic_2d",
    "gen_poisson_3d_randk",
    "poisson_1d",
    "poisson_2d",
    "parse_generator",
]


@dataclass(frozen=True)
class AniSpec:
    """Anisotropic diffusion ``-div(K grad u)`` on the unit square.

    ``K = [[eps + cos^2 t, cos t sin t], [cos t sin t, eps + sin^2 t]]``.
    """

    nx: int
    ny: int
    epsilon: float = 0.001
    theta: float = 0.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("nx and ny must be >= 2")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def coefficients(self) -> tuple[float, float, float]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.epsilon + c * c, self.epsilon + s * s, c * s


@dataclass(frozen=True)
class RandPermSpec:
    nx: int
    ny: int
    nz: int
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("grid counts must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def _stencil_matrix(shape, offsets_weights) -> CsrMatrix:
    """Assemble a constant stencil on a grid with zero Dirichlet closure.

    ``offsets_weights`` maps offsets ``(dx, dy)`` to coefficients; neighbours
    outside the grid are dropped. Index ``i + nx*j`` (x runs fastest).
    """
    nx, ny = shape
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ii, jj = ii.ravel(), jj.ravel()
    src = ii + nx * jj
    rows, cols, vals = [], [], []
    for (dx, dy), coef in offsets_weights.items():
        if coef == 0.0:
            continue
        ti, tj = ii + dx, jj + dy
        ok = (ti >= 0) & (ti < nx) & (tj >= 0) & (tj < ny)
        rows.append(src[ok])
        cols.append((ti + nx * tj)[ok])
        vals.append(np.full(np.count_nonzero(ok), coef))
    n = nx * ny
    return CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n))


def gen_anisotropic_2d(spec: AniSpec) -> CsrMatrix:
    """Nine-point finite differences for the anisotropic problem.

    Interior grid points with spacing ``h = 1/(n+1)`` per direction. The
    mixed derivative uses the four-corner cross difference and disappears for
    ``theta = 0``, leaving the five-point stencil. The matrix is positive
    definite because ``a b - c^2 = eps (1 + eps) > 0``.
    """
    a, b, c = spec.coefficients
    hx, hy = 1.0 / (spec.nx + 1), 1.0 / (spec.ny + 1)
    ex, ey, exy = a / hx**2, b / hy**2, c / (2.0 * hx * hy)
    if spec.theta == 0.0:
        exy = 0.0
    stencil = {
        (0, 0): 2.0 * ex + 2.0 * ey,
        (1, 0): -ex,
        (-1, 0): -ex,
        (0, 1): -ey,
        (0, -1): -ey,
        (1, 1): -exy,
        (-1, -1): -exy,
        (1, -1): exy,
        (-1, 1): exy,
    }
    return _stencil_matrix((spec.nx, spec.ny), stencil)


def poisson_2d(nx: int, ny: int | None = None) -> CsrMatrix:
    """Five-point Laplacian (4 on the diagonal, -1 off) with Dirichlet closure."""
    ny = nx if ny is None else ny
    return _stencil_matrix((nx, ny), {(0, 0): 4.0, (1, 0): -1.0, (-1, 0): -1.0, (0, 1): -1.0, (0, -1): -1.0})


def poisson_1d(n: int) -> CsrMatrix:
    i = np.arange(n)
    rows = np.r_[i, i[1:], i[:-1]]
    cols = np.r_[i, i[:-1], i[1:]]
    vals = np.r_[np.full(n, 2.0), -np.ones(2 * (n - 1))]
    return CsrMatrix.from_coo(rows, cols, vals, (n, n))


def gen_poisson_3d_randk(spec: RandPermSpec) -> CsrMatrix:
    """Cell-centred finite volumes for ``-div(k grad u)`` on a unit-spaced grid.

    Cell permeabilities are lognormal with mean 1,
    ``k = exp(sigma z - sigma^2 / 2)``. Interior faces use the harmonic mean
    of the two cells; a boundary face sees a ghost cell with the same ``k``
    and value zero. With ``sigma = 0`` this is the 7-point Laplacian.
    """
    nx, ny, nz = spec.nx, spec.ny, spec.nz
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((nz, ny, nx))
    k = np.exp(spec.sigma * z - 0.5 * spec.sigma**2)
    idx = np.arange(nx * ny * nz).reshape(nz, ny, nx)
    diag = np.zeros((nz, ny, nx))
    rows, cols, vals = [], [], []
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        k1, k2 = k[lo], k[hi]
        t = 2.0 * k1 * k2 / (k1 + k2)
        diag[lo] += t
        diag[hi] += t
        i1, i2 = idx[lo].ravel(), idx[hi].ravel()
        rows += [i1, i2]
        cols += [i2, i1]
        vals += [-t.ravel(), -t.ravel()]
        # Dirichlet ghost faces at both ends of this axis
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[axis] = 0
        last[axis] = -1
        diag[tuple(first)] += k[tuple(first)]
        diag[tuple(last)] += k[tuple(last)]
    n = idx.size
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n))


def parse_generator(text: str) -> CsrMatrix:
    """Build a matrix from a generator string.

    Accepted forms::

        ani:NX,NY,EPS,THETA
        poisson2d:NX[,NY]
        poisson1d:N
        randk:NX,NY,NZ,SIGMA[,SEED]
    """
    name, _, args = text.partition(":")
    parts = [p for p in args.split(",") if p.strip()]
    name = name.strip().lower()
    try:
        if name == "ani":
            nx, ny = int(parts[0]), int(parts[1])
            eps = float(parts[2]) if len(parts) > 2 else 0.001
            theta = _angle(parts[3]) if len(parts) > 3 else 0.0
            return gen_anisotropic_2d(AniSpec(nx, ny, eps, theta))
        if name == "poisson2d":
            nx = int(parts[0])
            return poisson_2d(nx, int(parts[1]) if len(parts) > 1 else nx)
        if name == "poisson1d":
            return poisson_1d(int(parts[0]))
        if name == "randk":
            seed = int(parts[4]) if len(parts) > 4 else 0
            return gen_poisson_3d_randk(
                RandPermSpec(int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3]), seed)
            )
    except (IndexError, ValueError) as exc:
        raise ValueError(f"bad generator spec {text!r}: {exc}") from exc
    raise ValueError(f"unknown generator {name!r} in {text!r}")


def _angle(s: str) -> float:
    """Angle in radians; ``pi/8`` style fractions are accepted."""
    s = s.strip().lower()
    if "pi" in s:
        num, _, den = s.partition("/")
        factor = num.replace("pi", "").replace("*", "").strip()
        value = (float(factor) if factor else 1.0) * math.pi
        return value / float(den) if den else value
    return float(s)
