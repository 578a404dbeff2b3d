import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rank1lab.matspace import (Tolerance, cross3, dot3, is_rank1_connected, minor, minors, normalize_direction,
                               numeric_rank, span_dim)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
mat32 = arrays(np.float64, (3, 2), elements=finite)
vec3 = arrays(np.float64, (3,), elements=finite)


def test_minor_values():
    M = np.array([[1.0, 0.0], [0.0, 1.0], [5.0, 7.0]])
    assert minor(M, 1, 2) == 1.0
    assert minor(np.zeros((3, 2)), 1, 2) == 0.0
    assert minor(M, 1, 3) == pytest.approx(7.0)
    assert minor(M, 2, 3) == pytest.approx(-5.0)
    np.testing.assert_allclose(minors(M), [1.0, 7.0, -5.0])


@pytest.mark.parametrize("i,j", [(0, 1), (2, 2), (1, 4), (3, 1)])
def test_minor_rejects_bad_pairs(i, j):
    with pytest.raises(ValueError):
        minor(np.eye(3, 2), i, j)


@given(mat32)
def test_minor_alternating(M):
    assert minor(M[[1, 0, 2]], 1, 2) == pytest.approx(-minor(M, 1, 2), abs=1e-12)


def test_numeric_rank_examples():
    assert numeric_rank(np.zeros((3, 2))) == 0
    assert numeric_rank(np.array([[1, 2], [2, 4], [3, 6]])) == 1
    assert numeric_rank(np.array([[1, 0], [0, 1], [0, 0]])) == 2
    assert numeric_rank(np.zeros((3, 2)), Tolerance(0.5, 0.5)) == 0


@given(mat32, st.floats(0.1, 10))
def test_numeric_rank_transpose_and_scale(M, c):
    r = numeric_rank(M)
    assert numeric_rank(M.T) == r
    assert numeric_rank(c * M) == r
    assert numeric_rank(-c * M) == r


def test_rank1_connection_examples():
    A1, A2 = np.diag([-1.0, -3.0]), np.diag([-3.0, 1.0])
    assert not is_rank1_connected(A1, A1)
    assert not is_rank1_connected(A1, A2)
    assert is_rank1_connected(A1, np.diag([-1.0, 1.0]))


@given(mat32, mat32)
def test_rank1_connection_symmetric(A, B):
    assert is_rank1_connected(A, B) == is_rank1_connected(B, A)


def test_rank1_test_agrees_with_minors():
    rng = np.random.default_rng(11)
    gen = rng.normal(size=(5000, 3, 2))
    r1 = np.einsum("ki,kj->kij", rng.normal(size=(5000, 3)), rng.normal(size=(5000, 2)))
    for M in np.concatenate([gen, r1]):
        by_minors = np.max(np.abs(minors(M))) <= 1e-9 * max(1.0, np.sum(M * M))
        assert (numeric_rank(M) <= 1) == by_minors


def test_span_dim():
    M = np.arange(6.0).reshape(3, 2)
    assert span_dim([np.zeros((3, 2))]) == 0
    assert span_dim([M, 2 * M]) == 1
    T = [np.diag([-1.0, -3.0]), np.diag([-3.0, 1.0]), np.diag([1.0, 3.0]), np.diag([3.0, -1.0])]
    assert span_dim([t - T[0] for t in T[1:]]) == 2


def test_vector_algebra():
    np.testing.assert_array_equal(cross3([1, 0, 0], [0, 1, 0]), [0, 0, 1])
    h = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(cross3(h, 2 * h), 0.0, atol=1e-15)
    assert dot3([1, 2, 3], [4, 5, 6]) == 32


@given(vec3)
def test_cross_self_zero(x):
    np.testing.assert_array_equal(cross3(x, x), 0.0)


def test_normalize_direction():
    M = np.array([[0.0, -2.0], [0.0, -4.0], [0.0, 0.0]])
    N = normalize_direction(M)
    assert np.linalg.norm(N) == pytest.approx(1.0)
    np.testing.assert_allclose(N, normalize_direction(-3 * M))
    assert N[0, 1] > 0


@pytest.mark.parametrize("rt,rs", [(0.0, 1e-9), (1e-10, 0.0), (1.0, 1e-9), (1e-10, -1.0)])
def test_tolerance_validation(rt, rs):
    with pytest.raises(ValueError):
        Tolerance(rt, rs)
