import numpy as np
import pytest

from relax_mprk.linalg import SingularMatrixError, lu_solve


def test_identity():
    b = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(lu_solve(np.eye(3), b), b)


def test_requires_pivoting():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    x = lu_solve(A, np.array([2.0, 5.0]))
    assert np.allclose(x, [5.0, 2.0])


def test_random_systems_small_residual():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = rng.integers(1, 9)
        A = rng.normal(size=(n, n)) + n * np.eye(n)
        b = rng.normal(size=n)
        x = lu_solve(A, b)
        assert np.allclose(A @ x, b, rtol=0, atol=1e-10 * np.abs(b).max())


def test_singular_matrix_raises():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError):
        lu_solve(A, np.array([1.0, 1.0]))


def test_zero_row_raises():
    A = np.array([[1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(SingularMatrixError):
        lu_solve(A, np.array([1.0, 1.0]))


def test_badly_row_scaled_m_matrix():
    # column sums 1 with one enormous diagonal entry; genuinely solvable
    # even though a naive residual scale check would flag it
    A = np.array([
        [2.0e16, 0.0, -0.5],
        [-2.0e16 + 1.0, 2.0, 0.0],
        [0.0, -1.0, 1.5],
    ])
    b = np.array([1.0e-12, 3.0, 2.0])
    x = lu_solve(A, b)
    assert np.allclose(A @ x, b, rtol=0, atol=1e-9 * np.abs(b).max())


def test_shape_validation():
    with pytest.raises(ValueError):
        lu_solve(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        lu_solve(np.eye(2), np.ones(3))
    with pytest.raises(ValueError):
        lu_solve(np.array([[np.nan, 0.0], [0.0, 1.0]]), np.ones(2))
