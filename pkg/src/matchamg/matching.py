"""Edge weights from a matrix and a smooth vector, and weighted matching.

``suitor_match`` is the production matcher (a 1/2-approximation);
``exact_match_oracle`` is an exhaustive bitmask DP for small graphs used to
check it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .sparse import CsrMatrix, transpose

__all__ = [
    "UNMATCHED",
    "WeightedGraph",
    "Matching",
    "build_weights",
    "suitor_match",
    "exact_match_oracle",
    "matching_weight",
    "graph_from_edges",
]

UNMATCHED = -1
ORACLE_MAX_VERTICES = 20


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected weighted graph stored as a symmetric CSR adjacency.

    ``zero_denominators`` counts edges whose weight formula degenerated
    (both smooth-vector entries zero); those edges carry weight 0.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    weights: np.ndarray
    zero_denominators: int = 0

    @property
    def n_edges(self) -> int:
        return int(self.col_idx.size // 2)

    def edges(self):
        """Yield ``(i, j, c_ij)`` once per undirected edge, with ``i < j``."""
        for i in range(self.n):
            for k in range(self.row_ptr[i], self.row_ptr[i + 1]):
                j = int(self.col_idx[k])
                if i < j:
                    yield i, j, float(self.weights[k])

    def check(self) -> None:
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        if np.any(rows == self.col_idx):
            raise ValueError("graph has a self-loop")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("graph has non-finite weights")
        g = CsrMatrix(self.n, self.n, self.row_ptr, self.col_idx, self.weights)
        t = transpose(g)
        if not g.pattern_equal(t) or not np.array_equal(g.values, t.values):
            raise ValueError("graph is not symmetric")


def graph_from_edges(n: int, edges) -> WeightedGraph:
    """Build a graph from ``(i, j, weight)`` triples (each edge listed once)."""
    edges = list(edges)
    if not edges:
        return WeightedGraph(n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, np.int64), np.zeros(0))
    i, j, c = (np.asarray(col) for col in zip(*edges))
    m = CsrMatrix.from_coo(np.r_[i, j], np.r_[j, i], np.r_[c, c], (n, n), sum_duplicates=False)
    return WeightedGraph(n, m.row_ptr, m.col_idx, m.values)


@dataclass(frozen=True, eq=False)
class Matching:
    """``mate[i]`` is the partner of ``i`` or ``UNMATCHED``."""

    mate: np.ndarray

    @property
    def n(self) -> int:
        return int(self.mate.size)

    @property
    def n_pairs(self) -> int:
        return int(np.count_nonzero(self.mate != UNMATCHED) // 2)

    def pairs(self) -> list[tuple[int, int]]:
        idx = np.flatnonzero(self.mate > np.arange(self.n))
        return [(int(i), int(self.mate[i])) for i in idx]

    def is_valid(self) -> bool:
        m = self.mate
        matched = np.flatnonzero(m != UNMATCHED)
        if np.any(m[matched] == matched):
            return False
        if np.any((m[matched] < 0) | (m[matched] >= m.size)):
            return False
        return bool(np.all(m[m[matched]] == matched))


def matching_weight(G: WeightedGraph, M: Matching) -> float:
    total = 0.0
    for i, j in M.pairs():
        cols = G.col_idx[G.row_ptr[i] : G.row_ptr[i + 1]]
        k = np.searchsorted(cols, j)
        if k >= cols.size or cols[k] != j:
            raise ValueError(f"matched pair ({i}, {j}) is not an edge of the graph")
        total += G.weights[G.row_ptr[i] + k]
    return total


def build_weights(A: CsrMatrix, w) -> WeightedGraph:
    """Compatible-matching edge weights of ``A`` for the smooth vector ``w``.

    For every off-diagonal entry::

        c_ij = 1 - 2 a_ij w_i w_j / (a_ii w_i^2 + a_jj w_j^2)

    The symmetric part of ``A`` is used so the weights are exactly symmetric
    even when ``A`` (e.g. a Galerkin coarse matrix) is symmetric only up to
    rounding. Edges where both ``w_i`` and ``w_j`` vanish get weight 0 and are
    counted in ``zero_denominators``.
    """
    w = np.asarray(w, dtype=np.float64)
    if A.nrows != A.ncols:
        raise ValueError("build_weights needs a square matrix")
    if w.shape != (A.nrows,):
        raise ValueError(f"smooth vector has shape {w.shape}, expected ({A.nrows},)")
    At = transpose(A)
    if not A.pattern_equal(At):
        raise ValueError("matrix pattern is not symmetric")
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ValueError(f"non-positive diagonal entry in row {int(np.flatnonzero(diag <= 0)[0])}")

    rows = A.row_of_entries()
    cols = A.col_idx
    off = rows != cols
    a_sym = 0.5 * (A.values + At.values)
    r, c, a = rows[off], cols[off], a_sym[off]
    denom = diag[r] * w[r] ** 2 + diag[c] * w[c] ** 2
    ok = denom != 0.0
    weights = np.zeros(r.size)
    weights[ok] = 1.0 - 2.0 * a[ok] * w[r[ok]] * w[c[ok]] / denom[ok]

    row_ptr = np.zeros(A.nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=A.nrows), out=row_ptr[1:])
    return WeightedGraph(A.nrows, row_ptr, c.copy(), weights, int(np.count_nonzero(~ok) // 2))


@njit(cache=True)
def _suitor(n, row_ptr, col_idx, weights):
    suitor = np.full(n, -1, dtype=np.int64)
    ws = np.zeros(n)
    for u in range(n):
        current = u
        while current != -1:
            partner = -1
            heaviest = 0.0
            for k in range(row_ptr[current], row_ptr[current + 1]):
                v = col_idx[k]
                c = weights[k]
                if c <= 0.0:
                    continue
                # equal weights: the lower proposer index wins
                beats_suitor = c > ws[v] or (c == ws[v] and suitor[v] != -1 and current < suitor[v])
                if not beats_suitor:
                    continue
                if partner == -1 or c > heaviest or (c == heaviest and v < partner):
                    partner = v
                    heaviest = c
            if partner == -1:
                break
            dislodged = suitor[partner]
            suitor[partner] = current
            ws[partner] = heaviest
            current = dislodged
    mate = np.full(n, -1, dtype=np.int64)
    for u in range(n):
        v = suitor[u]
        if v != -1 and suitor[v] == u:
            mate[u] = v
    return mate


def suitor_match(G: WeightedGraph) -> Matching:
    """Approximate maximum weight matching with the sequential Suitor algorithm.

    Every vertex proposes to its heaviest neighbour whose current suitor is
    lighter; a displaced suitor proposes again. Mutual suitors form the
    matching, which is the locally dominant matching for the edge order
    (weight descending, then lower endpoint indices first), hence at least
    half the optimum. Edges with weight <= 0 are never matched.
    """
    mate = _suitor(G.n, G.row_ptr, G.col_idx, G.weights)
    return Matching(mate)


@njit(cache=True)
def _exact_dp(n, row_ptr, col_idx, weights):
    size = 1 << n
    best = np.zeros(size)
    choice = np.full(size, -1, dtype=np.int64)
    for mask in range(1, size):
        i = 0
        while not (mask >> i) & 1:
            i += 1
        rest = mask ^ (1 << i)
        best[mask] = best[rest]
        choice[mask] = -1
        for k in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[k]
            if (rest >> j) & 1:
                cand = weights[k] + best[rest ^ (1 << j)]
                if cand > best[mask]:
                    best[mask] = cand
                    choice[mask] = j
    mate = np.full(n, -1, dtype=np.int64)
    mask = size - 1
    while mask:
        i = 0
        while not (mask >> i) & 1:
            i += 1
        j = choice[mask]
        mask ^= 1 << i
        if j != -1:
            mate[i] = j
            mate[j] = i
            mask ^= 1 << j
    return mate, best[size - 1]


def exact_match_oracle(G: WeightedGraph) -> Matching:
    """Maximum weight matching by exhaustive bitmask dynamic programming.

    ``best[S]`` is the optimum on the vertex subset ``S``; the lowest vertex
    of ``S`` is either left unmatched or paired with a neighbour in ``S``.
    Only feasible for ``n <= 20``.
    """
    if G.n > ORACLE_MAX_VERTICES:
        raise ValueError(f"exact oracle limited to {ORACLE_MAX_VERTICES} vertices, got {G.n}")
    if G.n == 0:
        return Matching(np.zeros(0, dtype=np.int64))
    mate, _ = _exact_dp(G.n, G.row_ptr, G.col_idx, G.weights)
    return Matching(mate)
