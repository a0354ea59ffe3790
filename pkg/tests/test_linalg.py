import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tagk.linalg import (
    AsymmetricMatrixError,
    DimensionError,
    NotPositiveDefiniteError,
    dot,
    frobenius_norm_sq,
    identity,
    mat_vec,
    solve_spd,
    sym_eig3,
    transpose,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_mat_vec_examples():
    assert np.array_equal(mat_vec(identity(3), [1.0, 2.0, 3.0]), [1, 2, 3])
    assert np.array_equal(mat_vec(np.zeros((2, 2)), [5.0, 7.0]), [0, 0])
    assert np.array_equal(mat_vec([[1.0, 2.0], [3.0, 4.0]], [1.0, 1.0]), [3, 7])


def test_mat_vec_dimension_mismatch():
    with pytest.raises(DimensionError):
        mat_vec(np.ones((2, 3)), np.ones(2))


def test_dot_examples():
    assert dot([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert dot([2.0, 3.0], [2.0, 3.0]) == 13.0
    with pytest.raises(DimensionError):
        dot([1.0], [1.0, 2.0])


@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_self_dot_nonnegative(x):
    assert dot(x, x) >= 0.0


def test_frobenius_examples():
    assert frobenius_norm_sq(identity(2)) == 2.0
    assert frobenius_norm_sq(np.zeros((3, 4))) == 0.0
    assert frobenius_norm_sq([[3.0, 4.0]]) == 25.0


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_adjoint_identity(m, n, seed):
    r = np.random.default_rng(seed)
    A, x, y = r.standard_normal((m, n)), r.standard_normal(n), r.standard_normal(m)
    lhs = dot(mat_vec(A, x), y)
    rhs = dot(x, mat_vec(transpose(A), y))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), np.abs(A).sum() * np.abs(x).max() * np.abs(y).max())


def test_solve_spd_examples(rng):
    B = rng.standard_normal((4, 3))
    assert np.allclose(solve_spd(identity(4), B), B, rtol=0, atol=1e-15)
    assert np.allclose(solve_spd(2 * identity(3), identity(3)), 0.5 * identity(3), rtol=1e-15, atol=0)


def test_solve_spd_vector_rhs(rng):
    G = rng.standard_normal((5, 5))
    M = G.T @ G + np.eye(5)
    b = rng.standard_normal(5)
    x = solve_spd(M, b)
    assert x.shape == (5,)
    assert np.linalg.norm(M @ x - b) <= 1e-10 * np.linalg.norm(b)


@given(st.integers(1, 30), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_solve_spd_residual(n, k, seed):
    r = np.random.default_rng(seed)
    G = r.standard_normal((n, n))
    M = G.T @ G + np.eye(n)
    B = r.standard_normal((n, k))
    X = solve_spd(M, B)
    assert np.linalg.norm(M @ X - B) <= 1e-10 * np.linalg.norm(B) * max(1.0, np.linalg.cond(M) / 1e3)


@given(st.floats(0.0, 6.0), st.integers(0, 2**32 - 1))
def test_solve_spd_conditioned_roundtrip(log_cond, seed):
    r = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(r.standard_normal((6, 6)))
    M = Q @ np.diag(np.logspace(0, log_cond, 6)) @ Q.T
    M = 0.5 * (M + M.T)
    B = r.standard_normal((6, 2))
    X = solve_spd(M, B)
    assert np.linalg.norm(mat_vec(M, X[:, 0]) - B[:, 0]) <= 1e-10 * np.linalg.norm(B[:, 0]) * 10 ** max(0, log_cond - 4)


def test_solve_spd_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError, match="not positive definite"):
        solve_spd(np.diag([1.0, -1.0]), np.ones(2))


def test_sym_eig3_examples():
    assert np.allclose(sym_eig3(np.diag([1.0, 2.0, 3.0])), [1, 2, 3], atol=1e-14)
    assert np.array_equal(sym_eig3(np.zeros((3, 3))), [0, 0, 0])
    assert np.allclose(sym_eig3(np.diag([3.0, 1.0, 2.0])), [1, 2, 3], atol=1e-14)


def test_sym_eig3_rejects_asymmetric():
    M = np.eye(3)
    M[0, 1] = 1.0
    with pytest.raises(AsymmetricMatrixError):
        sym_eig3(M)
    with pytest.raises(DimensionError):
        sym_eig3(np.eye(2))


@given(arrays(np.float64, (3, 3), elements=finite))
def test_sym_eig3_characteristic_polynomial(G):
    M = 0.5 * (G + G.T)
    lam = sym_eig3(M)
    scale = max(np.linalg.norm(M), 1e-300)
    assert np.all(np.diff(lam) >= -1e-12 * scale)
    ref = np.linalg.eigvalsh(M)
    assert np.allclose(lam, ref, rtol=0, atol=1e-9 * scale)
    for l in lam:
        # det(M - l I) relative to the cube of the matrix scale; exact zeros
        # make numpy's LU divide by zero, which is harmless here
        with np.errstate(divide="ignore"):
            d = np.linalg.det(M - l * np.eye(3))
        assert abs(d) <= 1e-8 * scale**3


@given(arrays(np.float64, (3, 3), elements=st.floats(-10, 10)))
def test_sym_eig3_trace_and_determinant(G):
    M = 0.5 * (G + G.T) + 0.0
    lam = sym_eig3(M)
    scale = max(np.linalg.norm(M), 1e-12)
    assert abs(lam.sum() - np.trace(M)) <= 1e-10 * scale * 3
    with np.errstate(divide="ignore"):
        det = np.linalg.det(M)
    assert abs(np.prod(lam) - det) <= 1e-8 * scale**3


def test_sym_eig3_clustered_eigenvalues():
    Q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((3, 3)))
    for spectrum in ([1.0, 1.0, 1.0], [1.0, 1.0, 1.0 + 1e-9], [2.0, 5.0, 5.0], [-1.0, -1.0, 4.0]):
        M = Q @ np.diag(spectrum) @ Q.T
        M = 0.5 * (M + M.T)
        assert np.allclose(sym_eig3(M), sorted(spectrum), atol=1e-9 * np.linalg.norm(M))
