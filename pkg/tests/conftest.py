import numpy as np
import pytest

from matchamg.sparse import CsrMatrix

ACCEPTANCE_LINES: list[str] = []


def random_sparse(rng, nrows, ncols, density=0.1):
    mask = rng.random((nrows, ncols)) < density
    M = np.where(mask, rng.standard_normal((nrows, ncols)), 0.0)
    return M


def random_spd(rng, n, density=0.3, shift=0.5):
    """Diagonally shifted random symmetric matrix (dense and CSR)."""
    M = random_sparse(rng, n, n, density)
    M = np.triu(M, 1)
    M = M + M.T
    M[np.diag_indices(n)] = np.abs(M).sum(axis=1) + shift + rng.random(n)
    return M, CsrMatrix.from_dense(M)


def random_spd_general(rng, n, density=0.4):
    """s.p.d. but not diagonally dominant: ``B B^T + 1e-2 I``."""
    B = random_sparse(rng, n, n, density) + np.eye(n)
    M = B @ B.T + 1e-2 * np.eye(n)
    return M, CsrMatrix.from_dense(M)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
