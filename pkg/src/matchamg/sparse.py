"""CSR storage and the sparse kernels the rest of the package is built on.

All heavy loops are numba kernels operating on the raw CSR arrays. Row loops
are split into blocks (``prange``) so they run in parallel when numba has more
than one thread; inside a row the accumulation order is fixed, which keeps the
results reproducible at a given thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

__all__ = [
    "CsrMatrix",
    "LaneGroupPolicy",
    "ADMISSIBLE_GROUP_SIZES",
    "select_group_size",
    "spmv",
    "spmv_serial",
    "transpose",
    "spgemm",
    "galerkin_triple",
    "l1_diagonal",
]

ADMISSIBLE_GROUP_SIZES = (1, 2, 4, 8, 16, 32)


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed sparse row matrix.

    The arrays are normalised to contiguous ``int64``/``float64`` on
    construction. Instances are treated as immutable by every kernel.
    """

    nrows: int
    ncols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nrows", int(self.nrows))
        object.__setattr__(self, "ncols", int(self.ncols))
        object.__setattr__(self, "row_ptr", np.ascontiguousarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        if self.row_ptr.shape != (self.nrows + 1,):
            raise ValueError(
                f"row_ptr has length {self.row_ptr.size}, expected {self.nrows + 1}"
            )
        if self.col_idx.size != self.values.size:
            raise ValueError("col_idx and values must have the same length")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def row_of_entries(self) -> np.ndarray:
        """Row index of every stored entry (COO row array)."""
        return np.repeat(np.arange(self.nrows, dtype=np.int64), self.row_lengths())

    def check(self) -> None:
        """Raise ``ValueError`` if any CSR invariant is violated."""
        rp, ci = self.row_ptr, self.col_idx
        if rp[0] != 0 or rp[-1] != ci.size:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.ncols:
                raise ValueError("column index out of range")
            rows = self.row_of_entries()
            same_row = rows[1:] == rows[:-1]
            if np.any(ci[1:][same_row] <= ci[:-1][same_row]):
                raise ValueError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix contains non-finite values")

    def diagonal(self) -> np.ndarray:
        rows = self.row_of_entries()
        on_diag = rows == self.col_idx
        d = np.zeros(min(self.nrows, self.ncols))
        d[rows[on_diag]] = self.values[on_diag]
        return d

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.row_of_entries(), self.col_idx), self.values)
        return out

    def pattern_equal(self, other: "CsrMatrix") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
        )

    def is_symmetric(self, rtol: float = 0.0) -> bool:
        """Structural and numerical symmetry, values compared within ``rtol``
        relative to the largest magnitude entry."""
        if self.nrows != self.ncols:
            return False
        t = transpose(self)
        if not self.pattern_equal(t):
            return False
        scale = np.abs(self.values).max() if self.nnz else 0.0
        return bool(np.all(np.abs(self.values - t.values) <= rtol * scale))

    def copy(self) -> "CsrMatrix":
        return CsrMatrix(
            self.nrows, self.ncols, self.row_ptr.copy(), self.col_idx.copy(), self.values.copy()
        )

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, sum_duplicates=True) -> "CsrMatrix":
        """Assemble from triplets; rows are sorted and duplicates summed."""
        nrows, ncols = shape
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
            raise ValueError("triplet index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if sum_duplicates and rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        row_ptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=nrows), out=row_ptr[1:])
        return cls(nrows, ncols, row_ptr, cols, vals)

    @classmethod
    def from_dense(cls, M) -> "CsrMatrix":
        M = np.asarray(M, dtype=np.float64)
        r, c = np.nonzero(M)
        return cls.from_coo(r, c, M[r, c], M.shape)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    @classmethod
    def diag(cls, d) -> "CsrMatrix":
        d = np.asarray(d, dtype=np.float64)
        n = d.size
        return cls(n, n, np.arange(n + 1), np.arange(n), d.copy())


# ---------------------------------------------------------------------------
# lane-group (miniwarp) policy
# ---------------------------------------------------------------------------


def select_group_size(mean_nnz: float, all_rows_single: bool) -> int:
    """Smallest admissible lane-group size covering the mean row length.

    Size 1 is reserved for matrices with exactly one entry in every row
    (prolongators); everything else gets at least 2 and at most 32.
    """
    if all_rows_single:
        return 1
    for g in ADMISSIBLE_GROUP_SIZES[1:]:
        if g >= mean_nnz:
            return g
    return 32


@dataclass(frozen=True)
class LaneGroupPolicy:
    """How rows are mapped onto lanes in the row-parallel kernels.

    Each row is split into ``group_size`` strided lanes that accumulate
    independently and are then combined by a halving tree, the CPU analogue
    of a sub-warp handling one CSR row.
    """

    group_size: int = 32
    rows_per_lane_block: int = 128

    def __post_init__(self):
        if self.group_size not in ADMISSIBLE_GROUP_SIZES:
            raise ValueError(
                f"group_size must be one of {ADMISSIBLE_GROUP_SIZES}, got {self.group_size}"
            )

    @property
    def rows_per_task(self) -> int:
        # a 32-lane warp covers 32 // g rows at once
        return (32 // self.group_size) * self.rows_per_lane_block

    @classmethod
    def for_matrix(cls, A: CsrMatrix) -> "LaneGroupPolicy":
        lengths = A.row_lengths()
        mean = A.nnz / A.nrows if A.nrows else 0.0
        single = A.nrows > 0 and bool(np.all(lengths == 1))
        return cls(select_group_size(mean, single))


# ---------------------------------------------------------------------------
# SpMV
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def _spmv_lanes(row_ptr, col_idx, values, x, y, g, block):
    n = row_ptr.size - 1
    nblocks = (n + block - 1) // block
    for b in prange(nblocks):
        lanes = np.empty(g)
        stop = min(n, (b + 1) * block)
        for i in range(b * block, stop):
            start, end = row_ptr[i], row_ptr[i + 1]
            for lane in range(g):
                acc = 0.0
                for k in range(start + lane, end, g):
                    acc += values[k] * x[col_idx[k]]
                lanes[lane] = acc
            half = g // 2
            while half > 0:
                for lane in range(half):
                    lanes[lane] += lanes[lane + half]
                half //= 2
            y[i] = lanes[0]


@njit(cache=True, parallel=True)
def _spmv_single(row_ptr, col_idx, values, x, y, block):
    n = row_ptr.size - 1
    nblocks = (n + block - 1) // block
    for b in prange(nblocks):
        stop = min(n, (b + 1) * block)
        for i in range(b * block, stop):
            acc = 0.0
            for k in range(row_ptr[i], row_ptr[i + 1]):
                acc += values[k] * x[col_idx[k]]
            y[i] = acc


@njit(cache=True)
def _spmv_serial(row_ptr, col_idx, values, x, y):
    for i in range(row_ptr.size - 1):
        acc = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            acc += values[k] * x[col_idx[k]]
        y[i] = acc


def _check_vec(A: CsrMatrix, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (A.ncols,):
        raise ValueError(f"dimension mismatch: matrix has {A.ncols} columns, vector has shape {x.shape}")
    return x


def spmv(A: CsrMatrix, x, policy: LaneGroupPolicy | None = None, out=None) -> np.ndarray:
    """y = A @ x using the lane-group kernel selected by ``policy``.

    With ``policy=None`` the policy is derived from the matrix row lengths.
    """
    x = _check_vec(A, x)
    if policy is None:
        policy = LaneGroupPolicy.for_matrix(A)
    y = np.empty(A.nrows) if out is None else out
    if policy.group_size == 1:
        _spmv_single(A.row_ptr, A.col_idx, A.values, x, y, policy.rows_per_task)
    else:
        _spmv_lanes(A.row_ptr, A.col_idx, A.values, x, y, policy.group_size, policy.rows_per_task)
    return y


def spmv_serial(A: CsrMatrix, x) -> np.ndarray:
    """Plain row-serial SpMV, the baseline the lane-group kernel is benchmarked against."""
    x = _check_vec(A, x)
    y = np.empty(A.nrows)
    _spmv_serial(A.row_ptr, A.col_idx, A.values, x, y)
    return y


# ---------------------------------------------------------------------------
# transpose
# ---------------------------------------------------------------------------


@njit(cache=True)
def _transpose(nrows, ncols, row_ptr, col_idx, values):
    nnz = col_idx.size
    t_ptr = np.zeros(ncols + 1, dtype=np.int64)
    for k in range(nnz):
        t_ptr[col_idx[k] + 1] += 1
    for j in range(ncols):
        t_ptr[j + 1] += t_ptr[j]
    fill = t_ptr[:-1].copy()
    t_idx = np.empty(nnz, dtype=np.int64)
    t_val = np.empty(nnz)
    # rows visited in ascending order, so every output row comes out sorted
    for i in range(nrows):
        for k in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[k]
            dst = fill[j]
            t_idx[dst] = i
            t_val[dst] = values[k]
            fill[j] = dst + 1
    return t_ptr, t_idx, t_val


def transpose(A: CsrMatrix) -> CsrMatrix:
    ptr, idx, val = _transpose(A.nrows, A.ncols, A.row_ptr, A.col_idx, A.values)
    return CsrMatrix(A.ncols, A.nrows, ptr, idx, val)


# ---------------------------------------------------------------------------
# SpGEMM: two-phase, row-wise hash accumulation
# ---------------------------------------------------------------------------

_HASH_MULT = 2654435761


@njit(cache=True)
def _table_size(upper):
    size = 16
    while size < 2 * upper:
        size *= 2
    return size


@njit(cache=True)
def _row_upper_bounds(a_ptr, a_idx, b_ptr):
    n = a_ptr.size - 1
    ub = np.zeros(n, dtype=np.int64)
    for i in range(n):
        s = 0
        for k in range(a_ptr[i], a_ptr[i + 1]):
            j = a_idx[k]
            s += b_ptr[j + 1] - b_ptr[j]
        ub[i] = s
    return ub


@njit(cache=True, parallel=True)
def _spgemm_symbolic(a_ptr, a_idx, b_ptr, b_idx, ub, row_nnz, block):
    n = a_ptr.size - 1
    nblocks = (n + block - 1) // block
    for b in prange(nblocks):
        stop = min(n, (b + 1) * block)
        biggest = 0
        for i in range(b * block, stop):
            biggest = max(biggest, ub[i])
        keys = np.empty(_table_size(biggest), dtype=np.int64)
        for i in range(b * block, stop):
            size = _table_size(ub[i])
            mask = size - 1
            keys[:size] = -1
            count = 0
            for ka in range(a_ptr[i], a_ptr[i + 1]):
                j = a_idx[ka]
                for kb in range(b_ptr[j], b_ptr[j + 1]):
                    c = b_idx[kb]
                    h = (c * _HASH_MULT) & mask
                    while True:
                        if keys[h] == c:
                            break
                        if keys[h] == -1:
                            keys[h] = c
                            count += 1
                            break
                        h = (h + 1) & mask
            row_nnz[i] = count


@njit(cache=True, parallel=True)
def _spgemm_numeric(a_ptr, a_idx, a_val, b_ptr, b_idx, b_val, ub, c_ptr, c_idx, c_val, block):
    n = a_ptr.size - 1
    nblocks = (n + block - 1) // block
    for b in prange(nblocks):
        stop = min(n, (b + 1) * block)
        biggest = 0
        for i in range(b * block, stop):
            biggest = max(biggest, ub[i])
        cap = _table_size(biggest)
        keys = np.empty(cap, dtype=np.int64)
        vals = np.empty(cap)
        for i in range(b * block, stop):
            size = _table_size(ub[i])
            mask = size - 1
            keys[:size] = -1
            for ka in range(a_ptr[i], a_ptr[i + 1]):
                j = a_idx[ka]
                av = a_val[ka]
                for kb in range(b_ptr[j], b_ptr[j + 1]):
                    c = b_idx[kb]
                    h = (c * _HASH_MULT) & mask
                    while True:
                        if keys[h] == c:
                            vals[h] += av * b_val[kb]
                            break
                        if keys[h] == -1:
                            keys[h] = c
                            vals[h] = av * b_val[kb]
                            break
                        h = (h + 1) & mask
            start = c_ptr[i]
            m = c_ptr[i + 1] - start
            tmp_k = np.empty(m, dtype=np.int64)
            tmp_v = np.empty(m)
            pos = 0
            for h in range(size):
                if keys[h] != -1:
                    tmp_k[pos] = keys[h]
                    tmp_v[pos] = vals[h]
                    pos += 1
            order = np.argsort(tmp_k)
            for t in range(m):
                c_idx[start + t] = tmp_k[order[t]]
                c_val[start + t] = tmp_v[order[t]]


def spgemm(A: CsrMatrix, B: CsrMatrix, block: int = 256) -> CsrMatrix:
    """C = A @ B.

    A symbolic pass counts distinct columns per output row with a hash set,
    then a numeric pass accumulates values in a hash map and writes each row
    sorted by column. Entries that cancel to zero are kept.
    """
    if A.ncols != B.nrows:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    ub = _row_upper_bounds(A.row_ptr, A.col_idx, B.row_ptr)
    row_nnz = np.zeros(A.nrows, dtype=np.int64)
    _spgemm_symbolic(A.row_ptr, A.col_idx, B.row_ptr, B.col_idx, ub, row_nnz, block)
    c_ptr = np.zeros(A.nrows + 1, dtype=np.int64)
    np.cumsum(row_nnz, out=c_ptr[1:])
    nnz = int(c_ptr[-1])
    c_idx = np.empty(nnz, dtype=np.int64)
    c_val = np.empty(nnz)
    _spgemm_numeric(
        A.row_ptr, A.col_idx, A.values, B.row_ptr, B.col_idx, B.values, ub, c_ptr, c_idx, c_val, block
    )
    return CsrMatrix(A.nrows, B.ncols, c_ptr, c_idx, c_val)


def galerkin_triple(A: CsrMatrix, P: CsrMatrix) -> CsrMatrix:
    """Coarse operator P^T A P via one transpose and two SpGEMMs."""
    if A.nrows != A.ncols:
        raise ValueError("galerkin_triple needs a square A")
    if P.nrows != A.nrows:
        raise ValueError(f"dimension mismatch: A is {A.shape}, P is {P.shape}")
    return spgemm(transpose(P), spgemm(A, P))


def l1_diagonal(A: CsrMatrix) -> np.ndarray:
    """Diagonal of the l1-Jacobi smoother: a_ii + sum_{j != i} |a_ij|."""
    if A.nrows != A.ncols:
        raise ValueError("l1_diagonal needs a square matrix")
    rows = A.row_of_entries()
    on_diag = rows == A.col_idx
    has_diag = np.zeros(A.nrows, dtype=bool)
    has_diag[rows[on_diag]] = True
    diag = A.diagonal()
    bad = np.flatnonzero(~has_diag | (diag == 0.0))
    if bad.size:
        raise ValueError(f"zero or missing diagonal entry in row {int(bad[0])}")
    off = np.bincount(rows[~on_diag], weights=np.abs(A.values[~on_diag]), minlength=A.nrows)
    return diag + off
