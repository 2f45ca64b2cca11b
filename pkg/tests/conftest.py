import pytest

from smash.sparse import csr_from_triplets


@pytest.fixture(scope="session")
def skewed_matrices():
    """One hub row with 64x the nonzeros of every other row, wide enough
    that the hub takes the dense-accumulator path and the window planner
    keeps everything in a single window."""
    n = 4096
    ta = [(0, j, 1.0) for j in range(64)]
    ta += [(i, 64 + (i % (n - 64)), 1.0) for i in range(1, n)]
    tb = [(i, (i * 37 + j) % n, 1.0) for i in range(64) for j in range(64)]
    tb += [(i, (i * 11 + j) % n, 1.0) for i in range(64, n) for j in range(8)]
    return csr_from_triplets(ta, n, n), csr_from_triplets(tb, n, n)
