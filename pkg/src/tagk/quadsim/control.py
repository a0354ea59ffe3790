"""Discrete-time LQR for the linearised quadrotor."""

from dataclasses import dataclass

import numpy as np


class UnstabilizableError(RuntimeError):
    """Riccati recursion did not converge to a stabilising solution."""


def _rel_change(new, old):
    return np.linalg.norm(new - old) / max(np.linalg.norm(new), 1e-300)


def riccati_iterate(A, B, Q, R, tol=1e-10, max_iter=10_000, P0=None):
    """Plain value iteration ``P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA``."""
    P = Q.copy() if P0 is None else P0.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        G = np.linalg.solve(R + BtP @ B, BtP @ A)
        Pn = Q + A.T @ P @ A - A.T @ P @ B @ G
        Pn = 0.5 * (Pn + Pn.T)
        if _rel_change(Pn, P) < tol:
            return Pn
        P = Pn
    raise UnstabilizableError("Riccati iteration did not converge")


def riccati_doubling(A, B, Q, R, tol=1e-10, max_iter=10_000):
    """Same fixed point via the structure-preserving doubling recursion.

    Each pass squares the horizon of the value iteration, so a handful of
    passes reach the tolerance that plain iteration needs hundreds for.
    """
    n = A.shape[0]
    I = np.eye(n)
    Ak = A.copy()
    Gk = B @ np.linalg.solve(R, B.T)
    Hk = Q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        return _doubling_loop(Ak, Gk, Hk, I, tol, max_iter)


def _doubling_loop(Ak, Gk, Hk, I, tol, max_iter):
    for _ in range(max_iter):
        W = I + Gk @ Hk
        WA = np.linalg.solve(W, Ak)
        WG = np.linalg.solve(W, Gk)
        Hn = Hk + Ak.T @ Hk @ WA
        Gk = Gk + Ak @ WG @ Ak.T
        Ak = Ak @ WA
        Hn = 0.5 * (Hn + Hn.T)
        Gk = 0.5 * (Gk + Gk.T)
        if not np.all(np.isfinite(Hn)):
            break
        if _rel_change(Hn, Hk) < tol:
            return Hn
        Hk = Hn
    raise UnstabilizableError("unstabilizable linearization")


def lqr_gain(A, B, Q_cost, R_cost, method="doubling", return_cost=False):
    """State-feedback gain K (u = -K x) of the infinite-horizon discrete LQR.

    Raises UnstabilizableError when the recursion fails or the closed loop
    is not Schur stable.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q_cost, dtype=np.float64))
    R = np.atleast_2d(np.asarray(R_cost, dtype=np.float64))
    solver = riccati_doubling if method == "doubling" else riccati_iterate
    P = solver(A, B, Q, R)
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    rho = np.max(np.abs(np.linalg.eigvals(A - B @ K)))
    if not rho < 1.0:
        raise UnstabilizableError(f"closed-loop spectral radius {rho:.6f} >= 1")
    return (K, P) if return_cost else K


@dataclass
class LqrWeights:
    """Diagonal Bryson-style weights: 1 / (acceptable deviation)^2."""

    position: float = 0.02
    attitude: float = 0.3
    velocity: float = 0.2
    rate: float = 1.0
    thrust: float = 0.05

    def matrices(self):
        dev = np.repeat([self.position, self.attitude, self.velocity, self.rate], 3)
        return np.diag(1.0 / dev**2), np.eye(4) / self.thrust**2
