"""Small dense real linear algebra shared by the estimators and the simulator.

Vectors and matrices are plain float64 numpy arrays (row-major, zero-based).
The hot kernels are compiled with numba so that every estimator runs on the
same loop-level substrate; the public wrappers validate shapes and raise.
"""

import math

import numpy as np
from numba import njit


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class NotPositiveDefiniteError(ArithmeticError):
    """A Cholesky pivot was non-positive."""


class AsymmetricMatrixError(ValueError):
    """A matrix expected to be symmetric was not."""


def as_vector(x):
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    return v


def as_matrix(a):
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {m.shape}")
    return m


# --------------------------------------------------------------------------
# compiled kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _dot(x, y):
    acc = 0.0
    for i in range(x.shape[0]):
        acc += x[i] * y[i]
    return acc


@njit(cache=True)
def _mat_vec(A, x, out):
    m, n = A.shape
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += A[i, j] * x[j]
        out[i] = acc


@njit(cache=True)
def _frob_sq(A):
    acc = 0.0
    m, n = A.shape
    for i in range(m):
        for j in range(n):
            acc += A[i, j] * A[i, j]
    return acc


@njit(cache=True)
def _cholesky(M, L):
    """Lower factor of SPD ``M`` into ``L``; returns False on a bad pivot."""
    n = M.shape[0]
    for j in range(n):
        d = M[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if not d > 0.0:
            return False
        d = math.sqrt(d)
        L[j, j] = d
        for i in range(j + 1, n):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / d
        for i in range(j):
            L[i, j] = 0.0
    return True


@njit(cache=True)
def _cholesky_solve(L, B):
    """Overwrite ``B`` (n x k) with the solution of ``L L^T X = B``."""
    n, k = B.shape
    for c in range(k):
        for i in range(n):
            s = B[i, c]
            for j in range(i):
                s -= L[i, j] * B[j, c]
            B[i, c] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = B[i, c]
            for j in range(i + 1, n):
                s -= L[j, i] * B[j, c]
            B[i, c] = s / L[i, i]


@njit(cache=True)
def _solve_spd(M, B, X):
    """X <- M^{-1} B; returns False if M is not numerically positive definite."""
    n = M.shape[0]
    L = np.empty((n, n))
    if not _cholesky(M, L):
        return False
    X[:, :] = B
    _cholesky_solve(L, X)
    return True


@njit(cache=True)
def _jacobi_eig3(M):
    a = M.copy()
    for _ in range(50):
        off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
        scale = a[0, 0] ** 2 + a[1, 1] ** 2 + a[2, 2] ** 2 + 2.0 * off
        if off <= 1e-32 * scale or off == 0.0:
            break
        for p in range(2):
            for q in range(p + 1, 3):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(3):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(3):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    out = np.array([a[0, 0], a[1, 1], a[2, 2]])
    out.sort()
    return out


@njit(cache=True)
def _sym_eig3(M):
    """Ascending eigenvalues of a symmetric 3x3 matrix (Cardano, Jacobi near ties)."""
    p1 = M[0, 1] ** 2 + M[0, 2] ** 2 + M[1, 2] ** 2
    if p1 == 0.0:
        out = np.array([M[0, 0], M[1, 1], M[2, 2]])
        out.sort()
        return out
    q = (M[0, 0] + M[1, 1] + M[2, 2]) / 3.0
    d0 = M[0, 0] - q
    d1 = M[1, 1] - q
    d2 = M[2, 2] - q
    p = math.sqrt((d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1) / 6.0)
    b00 = d0 / p
    b11 = d1 / p
    b22 = d2 / p
    b01 = M[0, 1] / p
    b02 = M[0, 2] / p
    b12 = M[1, 2] / p
    r = 0.5 * (
        b00 * (b11 * b22 - b12 * b12)
        - b01 * (b01 * b22 - b12 * b02)
        + b02 * (b01 * b12 - b11 * b02)
    )
    # acos is ill-conditioned as |r| -> 1 (clustered eigenvalues)
    if abs(r) > 1.0 - 1e-6:
        return _jacobi_eig3(M)
    phi = math.acos(r) / 3.0
    hi = q + 2.0 * p * math.cos(phi)
    lo = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    mid = 3.0 * q - hi - lo
    return np.array([lo, mid, hi])


# --------------------------------------------------------------------------
# public surface
# --------------------------------------------------------------------------


def mat_vec(A, x):
    A = as_matrix(A)
    x = as_vector(x)
    if A.shape[1] != x.shape[0]:
        raise DimensionError(f"mat_vec: {A.shape} times vector of length {x.shape[0]}")
    out = np.empty(A.shape[0])
    _mat_vec(A, x, out)
    return out


def dot(x, y):
    x = as_vector(x)
    y = as_vector(y)
    if x.shape != y.shape:
        raise DimensionError(f"dot: lengths {x.shape[0]} and {y.shape[0]}")
    return float(_dot(x, y))


def frobenius_norm_sq(A):
    return float(_frob_sq(as_matrix(A)))


def transpose(A):
    return np.ascontiguousarray(as_matrix(A).T)


def identity(n):
    return np.eye(n)


def solve_spd(M, B):
    """Solve ``M X = B`` for symmetric positive definite ``M`` by Cholesky.

    ``B`` may be a vector or a matrix; the result has the same shape.
    Raises NotPositiveDefiniteError when a pivot is non-positive.
    """
    M = as_matrix(M)
    Bm = np.asarray(B, dtype=np.float64)
    vec = Bm.ndim == 1
    Bm = np.ascontiguousarray(Bm.reshape(-1, 1) if vec else Bm)
    if M.shape[0] != M.shape[1] or Bm.shape[0] != M.shape[0]:
        raise DimensionError(f"solve_spd: {M.shape} with right-hand side {Bm.shape}")
    X = np.empty_like(Bm)
    if not _solve_spd(M, Bm, X):
        raise NotPositiveDefiniteError("not positive definite")
    return X[:, 0] if vec else X


def sym_eig3(M, sym_tol=1e-9):
    """Eigenvalues of a symmetric 3x3 matrix in ascending order."""
    M = as_matrix(M)
    if M.shape != (3, 3):
        raise DimensionError(f"sym_eig3 needs a 3x3 matrix, got {M.shape}")
    scale = max(np.abs(M).max(), 1e-300)
    if np.abs(M - M.T).max() > sym_tol * scale:
        raise AsymmetricMatrixError("sym_eig3: input is not symmetric")
    return _sym_eig3(0.5 * (M + M.T))
