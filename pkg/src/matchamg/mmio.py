"""MatrixMarket coordinate files (real, general or symmetric)."""

from __future__ import annotations

import os

import numpy as np

from .sparse import CsrMatrix

__all__ = ["MatrixMarketError", "read_matrix_market", "write_matrix_market", "read_vector"]


class MatrixMarketError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def read_matrix_market(path: str | os.PathLike) -> CsrMatrix:
    """Read a coordinate MatrixMarket file.

    Symmetric files are mirrored to the full pattern, indices converted to
    zero-based and duplicate entries summed.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError(path, 1, "empty file")
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixMarketError(path, 1, "missing %%MatrixMarket header")
    obj, fmt, field, symmetry = (h.lower() for h in header[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(path, 1, f"unsupported format {obj} {fmt}")
    if field not in ("real", "integer"):
        raise MatrixMarketError(path, 1, f"unsupported field {field!r}")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(path, 1, f"unsupported symmetry {symmetry!r}")

    lineno = 1
    body = iter(enumerate(lines[1:], start=2))
    for lineno, line in body:
        if line.strip() and not line.lstrip().startswith("%"):
            break
    else:
        raise MatrixMarketError(path, lineno, "missing size line")
    try:
        nrows, ncols, nnz = (int(t) for t in lines[lineno - 1].split())
    except ValueError:
        raise MatrixMarketError(path, lineno, "size line must hold three integers") from None

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    k = 0
    for lineno, line in body:
        if not line.strip() or line.lstrip().startswith("%"):
            continue
        if k >= nnz:
            raise MatrixMarketError(path, lineno, f"more than {nnz} entries")
        tok = line.split()
        if len(tok) != 3:
            raise MatrixMarketError(path, lineno, "entry must be 'row col value'")
        try:
            i, j, v = int(tok[0]), int(tok[1]), float(tok[2])
        except ValueError:
            raise MatrixMarketError(path, lineno, f"cannot parse entry {line.strip()!r}") from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(path, lineno, f"index ({i}, {j}) outside {nrows}x{ncols}")
        if symmetry == "symmetric" and j > i:
            raise MatrixMarketError(path, lineno, "symmetric file must store the lower triangle")
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k != nnz:
        raise MatrixMarketError(path, lineno, f"expected {nnz} entries, found {k}")

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = np.r_[rows, cols[off]], np.r_[cols, rows[off]], np.r_[vals, vals[off]]
    return CsrMatrix.from_coo(rows, cols, vals, (nrows, ncols))


def write_matrix_market(A: CsrMatrix, path: str | os.PathLike, symmetric: bool = False) -> None:
    """Write ``A`` with 17 significant digits; ``symmetric`` stores the lower
    triangle only (the caller vouches that ``A`` is symmetric)."""
    rows = A.row_of_entries()
    cols = A.col_idx
    vals = A.values
    if symmetric:
        keep = cols <= rows
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    kind = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        fh.write(f"{A.nrows} {A.ncols} {rows.size}\n")
        for i, j, v in zip(rows + 1, cols + 1, vals):
            fh.write(f"{i} {j} {v:.16e}\n")


def read_vector(path: str | os.PathLike) -> np.ndarray:
    """Read a dense vector: ``.npy`` or whitespace-separated text."""
    path = os.fspath(path)
    if path.endswith(".npy"):
        return np.load(path).astype(np.float64).ravel()
    return np.loadtxt(path, dtype=np.float64, ndmin=1).ravel()
