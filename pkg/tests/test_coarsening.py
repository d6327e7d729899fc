import numpy as np
import pytest

from conftest import random_spd
from matchamg.coarsening import (
    Hierarchy,
    HierarchyStats,
    Level,
    SetupConfig,
    build_hierarchy,
    build_prolongator,
    double_pairwise,
    galerkin_by_aggregates,
    hierarchy_stats,
    pairwise_aggregate,
    restrict_vector,
)
from matchamg.matching import Matching
from matchamg.problems import AniSpec, gen_anisotropic_2d, poisson_1d, poisson_2d
from matchamg.sparse import CsrMatrix, galerkin_triple, spgemm, transpose


def mate_array(n, pairs):
    mate = np.full(n, -1)
    for i, j in pairs:
        mate[i], mate[j] = j, i
    return Matching(mate)


def random_matching(rng, n):
    perm = rng.permutation(n)
    k = int(rng.integers(0, n // 2 + 1))
    return mate_array(n, [(perm[2 * t], perm[2 * t + 1]) for t in range(k)])


def assert_unit_columns(P, tol=1e-13):
    assert np.all(P.row_lengths() == 1)
    PtP = spgemm(transpose(P), P)
    assert np.abs(PtP.to_dense() - np.eye(P.ncols)).max() <= tol


def test_pairwise_aggregate_examples():
    agg = pairwise_aggregate(mate_array(4, [(1, 2)]), 4)
    assert agg.agg_of.tolist() == [0, 1, 1, 2]
    assert (agg.n_p, agg.n_s, agg.n_c) == (1, 2, 3)
    assert agg.members() == [[0], [1, 2], [3]]

    agg = pairwise_aggregate(mate_array(3, []), 3)
    assert (agg.n_c, agg.n_s, agg.n_p) == (3, 3, 0)

    agg = pairwise_aggregate(mate_array(6, [(0, 5), (1, 3), (2, 4)]), 6)
    assert (agg.n_c, agg.n_p, agg.n_s) == (3, 3, 0)
    assert agg.agg_of.tolist() == [0, 1, 2, 1, 2, 0]


@pytest.mark.parametrize("seed", range(20))
def test_pairwise_aggregate_invariants(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(1, 60))
    agg = pairwise_aggregate(random_matching(r, n), n)
    sizes = np.bincount(agg.agg_of, minlength=agg.n_c)
    assert sizes.sum() == n
    assert set(sizes.tolist()) <= {1, 2}
    assert agg.n_c == agg.n_p + agg.n_s
    assert sorted(set(agg.agg_of.tolist())) == list(range(agg.n_c))
    # ids follow the smallest member index
    first = [min(m) for m in agg.members()]
    assert first == sorted(first)


def test_prolongator_examples():
    agg = pairwise_aggregate(mate_array(2, [(0, 1)]), 2)
    P = build_prolongator(agg, [1.0, 1.0])
    assert P.shape == (2, 1)
    assert np.allclose(P.values, [2**-0.5, 2**-0.5], rtol=4 * np.finfo(float).eps, atol=0)

    single = pairwise_aggregate(mate_array(1, []), 1)
    assert build_prolongator(single, [-3.0]).values.tolist() == [-1.0]
    assert build_prolongator(single, [0.0]).values.tolist() == [1.0]


def test_prolongator_zero_on_pair_names_aggregate():
    agg = pairwise_aggregate(mate_array(4, [(2, 3)]), 4)
    with pytest.raises(ValueError, match="aggregate 2"):
        build_prolongator(agg, [1.0, 1.0, 0.0, 0.0])


@pytest.mark.parametrize("seed", range(20))
def test_prolongator_orthonormal(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(1, 80))
    agg = pairwise_aggregate(random_matching(r, n), n)
    P = build_prolongator(agg, r.standard_normal(n))
    assert_unit_columns(P)


def test_restrict_vector():
    agg = pairwise_aggregate(mate_array(2, [(0, 1)]), 2)
    P = build_prolongator(agg, [1.0, 1.0])
    assert restrict_vector(P, [1.0, 1.0]) == pytest.approx([2**0.5], abs=1e-15)
    w = np.array([3.0, -1.0, 2.0])
    assert restrict_vector(CsrMatrix.identity(3), w).tolist() == w.tolist()
    with pytest.raises(ValueError):
        restrict_vector(P, [1.0])


@pytest.mark.parametrize("seed", range(10))
def test_restrict_vector_projection_norm(seed):
    r = np.random.default_rng(seed)
    n = 40
    agg = pairwise_aggregate(random_matching(r, n), n)
    P = build_prolongator(agg, r.standard_normal(n))
    w = r.standard_normal(n)
    wc = restrict_vector(P, w)
    projection = P.to_dense() @ wc
    assert np.linalg.norm(wc) == pytest.approx(np.linalg.norm(projection), rel=1e-13)
    assert np.linalg.norm(wc) <= np.linalg.norm(w) * (1 + 1e-14)
    # with w itself as the smooth vector each coarse entry is the aggregate norm
    P_w = build_prolongator(agg, w)
    norms = np.sqrt(np.bincount(agg.agg_of, weights=w * w))
    assert np.allclose(restrict_vector(P_w, w), norms, rtol=1e-13)


def test_galerkin_by_aggregates_examples(rng):
    Md, A = random_spd(rng, 6)
    G = galerkin_by_aggregates(A, CsrMatrix.identity(6))
    assert np.array_equal(G.to_dense(), Md)
    A2 = CsrMatrix.from_dense([[2, -1], [-1, 2]])
    P = CsrMatrix(2, 1, [0, 1, 2], [0, 0], [2**-0.5, 2**-0.5])
    assert galerkin_by_aggregates(A2, P).to_dense()[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_galerkin_by_aggregates_rejects_multi_entry_rows():
    P = CsrMatrix.from_dense([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="row 0"):
        galerkin_by_aggregates(CsrMatrix.identity(2), P)


@pytest.mark.parametrize("seed", range(20))
def test_galerkin_paths_agree(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 60))
    _, A = random_spd(r, n, density=r.uniform(0.05, 0.5))
    agg = pairwise_aggregate(random_matching(r, n), n)
    P = build_prolongator(agg, r.standard_normal(n))
    G1 = galerkin_by_aggregates(A, P)
    G2 = galerkin_triple(A, P)
    G1.check()
    assert G1.pattern_equal(G2)
    assert np.abs(G1.values - G2.values).max() <= 1e-12 * np.abs(G2.values).max()


def test_double_pairwise_1d_poisson():
    A = poisson_1d(16)
    P, Ac, wc = double_pairwise(A, np.ones(16))
    assert P.shape == (16, Ac.nrows)
    assert 4 <= Ac.nrows < 16
    assert_unit_columns(P)
    assert np.allclose(Ac.to_dense(), P.to_dense().T @ A.to_dense() @ P.to_dense(), atol=1e-13)
    assert np.allclose(wc, P.to_dense().T @ np.ones(16), atol=1e-14)


def test_double_pairwise_degenerate():
    A = CsrMatrix.from_dense([[3.0]])
    P, Ac, wc = double_pairwise(A, np.array([2.0]))
    assert P.shape == (1, 1) and P.values.tolist() == [1.0]
    assert Ac.to_dense().tolist() == [[3.0]]


def test_double_pairwise_matches_two_single_steps(rng):
    A = gen_anisotropic_2d(AniSpec(12, 12, 0.01, np.pi / 8))
    w = rng.uniform(0.5, 1.5, A.nrows)
    P, Ac, _ = double_pairwise(A, w)
    assert_unit_columns(P)
    dense = P.to_dense().T @ A.to_dense() @ P.to_dense()
    assert np.abs(Ac.to_dense() - dense).max() <= 1e-12 * np.abs(dense).max()
    assert A.nrows / Ac.nrows <= 4


def test_hierarchy_single_level_when_small():
    A = poisson_1d(50)
    h = build_hierarchy(A)
    assert h.stats.coarsest_bound == pytest.approx(40 * 50 ** (1 / 3))
    assert h.nl == 1
    assert hierarchy_stats(h) == (1, 1.0, 0.0)


def check_levels(h):
    for k, lev in enumerate(h.levels):
        assert lev.A.is_symmetric(rtol=1e-12)
        assert np.all(lev.A.diagonal() > 0)
        assert lev.l1_diag.shape == (lev.n,)
        if k < h.nl - 1:
            assert_unit_columns(lev.P)
            assert lev.R.shape == (lev.P.ncols, lev.P.nrows)
            assert lev.P.ncols == h.levels[k + 1].n
            assert lev.n / lev.P.ncols <= 4
            assert lev.P.ncols < lev.n


def test_hierarchy_poisson_64():
    A = poisson_2d(64)
    h = build_hierarchy(A)
    assert h.nl in (3, 4)
    assert h.levels[-1].n <= 40 * 4096 ** (1 / 3)
    assert not h.stats.stalled
    check_levels(h)


@pytest.mark.parametrize("theta", [0.0, np.pi / 8])
def test_hierarchy_ani_levels(theta):
    h = build_hierarchy(gen_anisotropic_2d(AniSpec(48, 48, 0.001, theta)), cfg=SetupConfig(coarse_factor=2))
    assert h.nl >= 4
    check_levels(h)


def test_hierarchy_pairwise_mode_and_cap():
    A = poisson_2d(32)
    h = build_hierarchy(A, cfg=SetupConfig(aggregation="pair", coarse_factor=1))
    for k in range(h.nl - 1):
        assert h.levels[k].n / h.levels[k + 1].n <= 2
    capped = build_hierarchy(A, cfg=SetupConfig(max_levels=2, coarse_factor=1))
    assert capped.nl == 2 and capped.stats.capped


def test_hierarchy_galerkin_paths_equivalent():
    A = gen_anisotropic_2d(AniSpec(24, 24, 0.001, np.pi / 8))
    h1 = build_hierarchy(A, cfg=SetupConfig(coarse_factor=2))
    h2 = build_hierarchy(A, cfg=SetupConfig(coarse_factor=2, galerkin="spgemm"))
    assert [l.n for l in h1.levels] == [l.n for l in h2.levels]
    for a, b in zip(h1.levels, h2.levels):
        assert np.abs(a.A.to_dense() - b.A.to_dense()).max() <= 1e-12 * np.abs(b.A.values).max()


def test_hierarchy_stall_on_diagonal_matrix():
    # no off-diagonal couplings: nothing can be matched
    h = build_hierarchy(CsrMatrix.diag(np.arange(1.0, 1001.0)))
    assert h.nl == 1 and h.stats.stalled


def test_hierarchy_rejects_nonsymmetric_pattern():
    A = CsrMatrix.from_dense(np.triu(np.ones((4, 4))))
    with pytest.raises(ValueError, match="symmetric"):
        build_hierarchy(A)


def fake_hierarchy(sizes, nnz):
    levels = []
    for n, z in zip(sizes, nnz):
        extra = z - n
        rows = np.r_[np.arange(n), np.arange(extra) % n]
        cols = np.r_[np.arange(n), (np.arange(extra) // n + 1 + np.arange(extra) % n) % n]
        A = CsrMatrix.from_coo(rows, cols, np.ones(z), (n, n))
        assert A.nnz == z
        levels.append(Level(A, None, None, np.ones(n), np.ones(n)))
    return Hierarchy(levels, HierarchyStats(), SetupConfig())


def test_hierarchy_stats_formula():
    nl, vc, cr = hierarchy_stats(fake_hierarchy([100, 25, 7], [100, 30, 10]))
    assert nl == 3
    assert vc == pytest.approx(1.4)
    assert cr == pytest.approx((4 + 25 / 7) / 3)
    assert cr == pytest.approx(2.524, abs=5e-4)
