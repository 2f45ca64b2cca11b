import numpy as np
import pytest

from smash.rmat import RmatParams, edges_for_target_nnz, rmat_generate, rmat_matrix
from smash.sparse import csr_from_triplets


def test_bounds_and_count():
    p = RmatParams(scale=2, edges=4, seed=42)
    trips = rmat_generate(p)
    assert len(trips) == 4
    for t in trips:
        assert 0 <= t.row < 4 and 0 <= t.col < 4
        assert t.value == 1.0


def test_determinism():
    p = RmatParams(scale=6, edges=500, seed=9)
    assert rmat_generate(p) == rmat_generate(p)
    m1, m2 = rmat_matrix(p), rmat_matrix(p)
    assert np.array_equal(m1.col_idx, m2.col_idx)
    assert np.array_equal(m1.values, m2.values)


def test_seed_changes_output():
    a = rmat_generate(RmatParams(scale=6, edges=500, seed=1))
    b = rmat_generate(RmatParams(scale=6, edges=500, seed=2))
    assert a != b


def test_duplicates_sum_to_multiplicities():
    p = RmatParams(scale=3, edges=2000, seed=5)   # tiny matrix, forced collisions
    m = csr_from_triplets(rmat_generate(p), 8, 8)
    assert m.values.sum() == 2000
    assert m.nnz < 2000


def test_matrix_matches_triplet_path():
    p = RmatParams(scale=5, edges=300, seed=3)
    via_trips = csr_from_triplets(rmat_generate(p), 32, 32)
    direct = rmat_matrix(p)
    assert np.array_equal(via_trips.row_ptr, direct.row_ptr)
    assert np.array_equal(via_trips.col_idx, direct.col_idx)
    assert np.array_equal(via_trips.values, direct.values)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        RmatParams(scale=2, edges=1, a=0.5, b=0.5, c=0.5, d=0.5).validate()
    with pytest.raises(ValueError):
        RmatParams(scale=0, edges=1).validate()
    with pytest.raises(ValueError):
        RmatParams(scale=2, edges=-1).validate()


def test_skew_concentrates_rows():
    # with the default row-heavy quadrants, early rows carry far more
    # entries than a uniform draw would give them
    m = rmat_matrix(RmatParams(scale=10, edges=20000, seed=2))
    top = m.row_nnz()[:64].sum()
    assert top > 4 * (20000 / 1024) * 64 / 16


def test_edge_search_hits_target():
    target = 3000
    p = edges_for_target_nnz(RmatParams(scale=9, edges=1000, seed=8), target)
    m = rmat_matrix(p)
    assert abs(m.nnz - target) <= 0.02 * target
