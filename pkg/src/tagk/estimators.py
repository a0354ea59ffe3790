"""Recursive-gain estimators: block RLS, block KF and the Kaczmarz family.

Every method consumes a :class:`MeasurementBlock` ``(A, b)`` and returns an
updated parameter vector.  RK and TARK sample rows with probability
proportional to the squared row norm; GRK and TAG-K restrict sampling to a
greedy candidate set and sample inside it proportionally to the squared
residual.  TARK and TAG-K return the average of the post-burn-in iterates.

The update kernels are written as plain loops (numba) so RLS, KF and the
Kaczmarz solvers share one execution model; see ``tagk.linalg``.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .linalg import (
    DimensionError,
    NotPositiveDefiniteError,
    _cholesky,
    _cholesky_solve,
    as_matrix,
    as_vector,
)

VARIANTS = ("RK", "GRK", "TARK", "TAGK")
GREEDY_VARIANTS = ("GRK", "TAGK")
AVERAGING_VARIANTS = ("TARK", "TAGK")

DEFAULT_ROW_NORM_FLOOR = 1e-12
JITTER = 1e-9


class DegenerateRowError(ValueError):
    """Row norm below the configured floor; the row cannot be projected on."""


class AlreadyConsistent(ArithmeticError):
    """The residual is exactly zero; nothing left to select."""


class NoTailIterates(ValueError):
    """Tail average requested before any post-burn-in iterate was recorded."""


class AllRowsDegenerate(ValueError):
    """Every row of the block is below the row-norm floor."""


class EmptyBlockWarning(UserWarning):
    """A zero-row block reached an estimator; the estimate was left unchanged."""


@dataclass
class MeasurementBlock:
    """One estimation window: ``A theta ~= b`` with ``A`` of shape (m, n)."""

    A: np.ndarray
    b: np.ndarray
    row_norm_floor: float = DEFAULT_ROW_NORM_FLOOR

    def __post_init__(self):
        self.A = as_matrix(self.A)
        self.b = as_vector(self.b)
        if self.A.shape[0] != self.b.shape[0]:
            raise DimensionError(f"A has {self.A.shape[0]} rows but b has {self.b.shape[0]}")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("measurement block contains non-finite entries")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def row_norms_sq(self):
        return np.einsum("ij,ij->i", self.A, self.A)

    @property
    def degenerate(self):
        """Boolean mask of rows whose squared norm is at or below the floor."""
        return self.row_norms_sq <= self.row_norm_floor

    def residual(self, theta):
        return self.b - self.A @ theta


@dataclass
class RlsState:
    theta: np.ndarray
    P: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        self.theta = as_vector(self.theta).copy()
        self.P = as_matrix(self.P).copy()
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"forgetting factor must lie in (0, 1], got {self.lam}")


@dataclass
class KfState:
    theta: np.ndarray
    P: np.ndarray
    Q_proc: np.ndarray
    R_meas: np.ndarray  # m x m; a scalar is broadcast to r * I on first use

    def __post_init__(self):
        self.theta = as_vector(self.theta).copy()
        self.P = as_matrix(self.P).copy()
        self.Q_proc = as_matrix(self.Q_proc).copy()
        self.R_meas = np.asarray(self.R_meas, dtype=np.float64).copy()


@dataclass
class SolverConfig:
    """Kaczmarz budget.  ``None`` budgets resolve per block: T = m, t_b = ceil(T/2)."""

    variant: str = "TAGK"
    iterations_T: Optional[int] = None
    burn_in_tb: Optional[int] = None
    row_norm_floor: float = DEFAULT_ROW_NORM_FLOOR
    seed: int = 0

    def __post_init__(self):
        self.variant = self.variant.upper().replace("-", "")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown Kaczmarz variant {self.variant!r}")
        if self.iterations_T is not None and self.iterations_T < 1:
            raise ValueError("iterations_T must be >= 1")
        if (
            self.burn_in_tb is not None
            and self.iterations_T is not None
            and not 0 <= self.burn_in_tb <= self.iterations_T
        ):
            raise ValueError("burn_in_tb must lie in [0, iterations_T]")

    def resolve(self, m):
        T = self.iterations_T if self.iterations_T is not None else max(m, 1)
        tb = self.burn_in_tb if self.burn_in_tb is not None else math.ceil(T / 2)
        if not 0 <= tb <= T:
            raise ValueError(f"burn-in {tb} outside [0, {T}]")
        return T, tb


def make_rng(base_seed, instance_id=0):
    """Counter-based stream keyed on ``(base_seed, instance_id)``."""
    ss = np.random.SeedSequence([int(base_seed), int(instance_id)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class KaczmarzState:
    theta: np.ndarray
    tail_sum: np.ndarray
    tail_count: int = 0
    rng: np.random.Generator = field(default_factory=lambda: make_rng(0))
    config: SolverConfig = field(default_factory=SolverConfig)

    @classmethod
    def start(cls, theta0, config=None, rng=None):
        config = config or SolverConfig()
        theta0 = as_vector(theta0).copy()
        return cls(
            theta=theta0,
            tail_sum=np.zeros_like(theta0),
            tail_count=0,
            rng=rng if rng is not None else make_rng(config.seed),
            config=config,
        )


# --------------------------------------------------------------------------
# Kaczmarz building blocks (shared by the wrappers and the solve kernel)
# --------------------------------------------------------------------------


@njit(cache=True)
def _project(theta, A, i, b_i, s_i):
    n = theta.shape[0]
    r = b_i
    for j in range(n):
        r -= A[i, j] * theta[j]
    step = r / s_i
    for j in range(n):
        theta[j] += step * A[i, j]


@njit(cache=True)
def _residual(A, b, theta, r):
    m, n = A.shape
    for i in range(m):
        acc = b[i]
        for j in range(n):
            acc -= A[i, j] * theta[j]
        r[i] = acc


@njit(cache=True)
def _threshold(r, s, active):
    """Returns (eps, R^2); R^2 == 0 flags a consistent block."""
    R2 = 0.0
    frob = 0.0
    best = 0.0
    for i in range(r.shape[0]):
        if active[i]:
            ri2 = r[i] * r[i]
            R2 += ri2
            frob += s[i]
            q = ri2 / s[i]
            if q > best:
                best = q
    if R2 == 0.0:
        return 0.0, 0.0
    return 0.5 * (best / R2 + 1.0 / frob), R2


@njit(cache=True)
def _candidate_weights(r, s, active, eps, R2, w):
    """w_i = r_i^2 on the greedy candidate set, 0 elsewhere; returns sum(w)."""
    total = 0.0
    best = -1.0
    arg = -1
    for i in range(r.shape[0]):
        w[i] = 0.0
        if not active[i]:
            continue
        ri2 = r[i] * r[i]
        q = ri2 / s[i]
        if q > best:
            best = q
            arg = i
        # relative slack of a few ulps keeps the equality boundary inside
        if ri2 >= eps * R2 * s[i] * (1.0 - 1e-12):
            w[i] = ri2
            total += ri2
    if arg >= 0 and w[arg] == 0.0:
        w[arg] = r[arg] * r[arg]
        total += w[arg]
    return total


@njit(cache=True)
def _pick(w, total, u):
    target = u * total
    acc = 0.0
    last = -1
    for i in range(w.shape[0]):
        if w[i] > 0.0:
            acc += w[i]
            last = i
            if acc > target:
                return i
    return last


@njit(cache=True)
def _kaczmarz_kernel(A, b, theta, T, tb, greedy, uniforms, floor, tail_sum):
    """Run T iterations in place on ``theta``.

    Returns the number of tail iterates added to ``tail_sum`` (iterates with
    index in [tb, T], theta_0 being the warm start), or -1 if every row is
    degenerate.
    """
    m, n = A.shape
    s = np.empty(m)
    active = np.empty(m, dtype=np.bool_)
    n_active = 0
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += A[i, j] * A[i, j]
        s[i] = acc
        active[i] = acc > floor
        if active[i]:
            n_active += 1
    if n_active == 0:
        return -1
    norm_w = np.empty(m)
    norm_total = 0.0
    for i in range(m):
        norm_w[i] = s[i] if active[i] else 0.0
        norm_total += norm_w[i]

    r = np.empty(m)
    w = np.empty(m)
    count = 0
    if tb == 0:
        for j in range(n):
            tail_sum[j] += theta[j]
        count += 1
    for t in range(1, T + 1):
        _residual(A, b, theta, r)
        eps, R2 = _threshold(r, s, active)
        if R2 == 0.0:
            # fixed point: the remaining iterates all equal theta
            k = T - max(t, tb) + 1
            if k > 0:
                for j in range(n):
                    tail_sum[j] += k * theta[j]
                count += k
            return count
        if greedy:
            total = _candidate_weights(r, s, active, eps, R2, w)
            i = _pick(w, total, uniforms[t - 1])
        else:
            i = _pick(norm_w, norm_total, uniforms[t - 1])
        step = r[i] / s[i]
        for j in range(n):
            theta[j] += step * A[i, j]
        if t >= tb:
            for j in range(n):
                tail_sum[j] += theta[j]
            count += 1
    return count


# --------------------------------------------------------------------------
# Kaczmarz public operations
# --------------------------------------------------------------------------


def rk_project(theta, a_row, b_i, row_norm_floor=DEFAULT_ROW_NORM_FLOOR):
    """Orthogonal projection of ``theta`` onto ``{x : <a_row, x> = b_i}``."""
    theta = as_vector(theta).copy()
    a_row = as_vector(a_row)
    if a_row.shape != theta.shape:
        raise DimensionError("row and estimate lengths differ")
    s = float(a_row @ a_row)
    if not s > row_norm_floor:
        raise DegenerateRowError(f"degenerate row (|a|^2 = {s:g})")
    _project(theta, a_row.reshape(1, -1), 0, float(b_i), s)
    return theta


def greedy_threshold(block, r):
    """Adaptive threshold ``0.5 * (max_i(r_i^2/s_i)/R^2 + 1/||A||_F^2)``.

    Degenerate rows are left out of every sum.  Raises AlreadyConsistent
    when the residual vanishes.
    """
    r = as_vector(r)
    s = block.row_norms_sq
    eps, R2 = _threshold(r, s, s > block.row_norm_floor)
    if R2 == 0.0:
        raise AlreadyConsistent("already consistent")
    return float(eps)


def select_candidates(block, r, eps):
    """Indices i with ``r_i^2 >= eps * R^2 * s_i`` (never empty for r != 0)."""
    r = as_vector(r)
    s = block.row_norms_sq
    active = s > block.row_norm_floor
    R2 = float(np.sum(r[active] ** 2))
    if R2 == 0.0:
        raise AlreadyConsistent("already consistent")
    w = np.empty_like(r)
    _candidate_weights(r, s, active, float(eps), R2, w)
    tau = np.flatnonzero(w > 0.0)
    assert tau.size > 0
    return tau


def sample_row(tau, r, rng):
    """Draw i from ``tau`` with probability r_i^2 / sum_{j in tau} r_j^2."""
    tau = np.asarray(tau, dtype=np.int64)
    if tau.size == 0:
        raise ValueError("empty candidate set")
    w = np.asarray(r, dtype=np.float64)[tau] ** 2
    total = float(w.sum())
    if total == 0.0:
        return int(tau[0])
    return int(tau[_pick(w, total, rng.random())])


def tail_average(state):
    if state.tail_count < 1:
        raise NoTailIterates("no post-burn-in iterates")
    return state.tail_sum / state.tail_count


def kaczmarz_solve(block, theta0, cfg, rng=None):
    """Run one Kaczmarz variant for T iterations from ``theta0``.

    RK/GRK return the last iterate, TARK/TAGK the tail average.
    """
    state = KaczmarzState.start(theta0, cfg, rng)
    _kaczmarz_run(state, block)
    return state.theta if cfg.variant not in AVERAGING_VARIANTS else tail_average(state)


def _kaczmarz_run(state, block):
    cfg = state.config
    if block.n != state.theta.shape[0]:
        raise DimensionError("block width does not match the estimate")
    T, tb = cfg.resolve(block.m)
    uniforms = state.rng.random(T)
    state.tail_sum[:] = 0.0
    count = _kaczmarz_kernel(
        block.A,
        block.b,
        state.theta,
        T,
        tb,
        cfg.variant in GREEDY_VARIANTS,
        uniforms,
        block.row_norm_floor,
        state.tail_sum,
    )
    if count < 0:
        raise AllRowsDegenerate("every row of the block is degenerate")
    state.tail_count = count


# --------------------------------------------------------------------------
# RLS and KF
# --------------------------------------------------------------------------


@njit(cache=True)
def _gain(PAt, S, K):
    """K <- P A^T S^{-1}; returns False if S is not positive definite."""
    n, m = PAt.shape
    L = np.empty((m, m))
    if not _cholesky(S, L):
        return False
    # S symmetric: solve S X = (P A^T)^T, then K = X^T
    X = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            X[i, j] = PAt[j, i]
    _cholesky_solve(L, X)
    for i in range(n):
        for j in range(m):
            K[i, j] = X[j, i]
    return True


@njit(cache=True)
def _innovation(P, A, diag_add, R, use_R):
    """Returns (P A^T, A P A^T + (diag_add I | R))."""
    m, n = A.shape
    PAt = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(n):
                acc += P[i, k] * A[j, k]
            PAt[i, j] = acc
    S = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(n):
                acc += A[i, k] * PAt[k, j]
            S[i, j] = acc
    for i in range(m):
        if use_R:
            for j in range(m):
                S[i, j] += R[i, j]
        else:
            S[i, i] += diag_add
    return PAt, S


@njit(cache=True)
def _correct(theta, P, A, b, K, scale):
    """theta += K (b - A theta);  P <- scale * (I - K A) P, symmetrised."""
    m, n = A.shape
    e = np.empty(m)
    _residual(A, b, theta, e)
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += K[i, j] * e[j]
        theta[i] += acc
    M = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(m):
                acc += K[i, k] * A[k, j]
            M[i, j] = -acc
        M[i, i] += 1.0
    Pn = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += M[i, k] * P[k, j]
            Pn[i, j] = acc * scale
    for i in range(n):
        for j in range(i, n):
            v = 0.5 * (Pn[i, j] + Pn[j, i])
            P[i, j] = v
            P[j, i] = v


@njit(cache=True)
def _rls_kernel(theta, P, A, b, lam, jitter):
    m, n = A.shape
    R = np.empty((0, 0))
    PAt, S = _innovation(P, A, lam, R, False)
    K = np.empty((n, m))
    if not _gain(PAt, S, K):
        for i in range(m):
            S[i, i] += jitter
        if not _gain(PAt, S, K):
            return False
    _correct(theta, P, A, b, K, 1.0 / lam)
    return True


@njit(cache=True)
def _kf_kernel(theta, P, Q, R, A, b, jitter):
    m, n = A.shape
    for i in range(n):
        for j in range(n):
            P[i, j] += Q[i, j]
    PAt, S = _innovation(P, A, 0.0, R, True)
    K = np.empty((n, m))
    if not _gain(PAt, S, K):
        for i in range(m):
            S[i, i] += jitter
        if not _gain(PAt, S, K):
            return False
    _correct(theta, P, A, b, K, 1.0)
    return True


def rls_update(state, block):
    """Block RLS step with forgetting; returns a new RlsState."""
    if block.n != state.theta.shape[0]:
        raise DimensionError("block width does not match the estimate")
    new = RlsState(state.theta, state.P, state.lam)
    if not _rls_kernel(new.theta, new.P, block.A, block.b, new.lam, JITTER):
        raise NotPositiveDefiniteError("RLS innovation matrix not positive definite")
    return new


def _meas_cov(R, m):
    if R.ndim == 0:
        return float(R) * np.eye(m)
    if R.shape != (m, m):
        raise DimensionError(f"R_meas shape {R.shape} does not match {m} rows")
    return R


def kf_update(state, block):
    """Random-walk parameter KF step (predict with Q_proc, correct with R_meas)."""
    if block.n != state.theta.shape[0]:
        raise DimensionError("block width does not match the estimate")
    new = KfState(state.theta, state.P, state.Q_proc, state.R_meas)
    R = np.ascontiguousarray(_meas_cov(new.R_meas, block.m))
    if not _kf_kernel(new.theta, new.P, new.Q_proc, R, block.A, block.b, JITTER):
        raise NotPositiveDefiniteError("KF innovation matrix not positive definite")
    return new


# --------------------------------------------------------------------------
# unified step
# --------------------------------------------------------------------------


def estimator_step(state, block, warm_start=None):
    """Advance ``state`` in place on one block and return the new estimate.

    Kaczmarz states restart from ``warm_start`` (default: their previous
    output); RLS and KF carry their covariance across calls.
    """
    if block.m == 0:
        warnings.warn("empty block", EmptyBlockWarning, stacklevel=2)
        return state.theta.copy()
    if isinstance(state, RlsState):
        if not _rls_kernel(state.theta, state.P, block.A, block.b, state.lam, JITTER):
            raise NotPositiveDefiniteError("RLS innovation matrix not positive definite")
        return state.theta.copy()
    if isinstance(state, KfState):
        R = _meas_cov(state.R_meas, block.m)
        if not _kf_kernel(state.theta, state.P, state.Q_proc, R, block.A, block.b, JITTER):
            raise NotPositiveDefiniteError("KF innovation matrix not positive definite")
        return state.theta.copy()
    if isinstance(state, KaczmarzState):
        if warm_start is not None:
            state.theta = as_vector(warm_start).copy()
        _kaczmarz_run(state, block)
        if state.config.variant in AVERAGING_VARIANTS:
            state.theta = tail_average(state)
        return state.theta.copy()
    raise TypeError(f"unsupported estimator state {type(state).__name__}")


# --------------------------------------------------------------------------
# named estimators for closed-loop runs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorSpec:
    """Hyperparameters of one named online estimator.

    ``kind`` is one of rls, kf, kaczmarz or oracle.  ``safety_filter=None``
    means the default: on for the covariance methods, off for Kaczmarz.
    """

    name: str
    kind: str
    lam: float = 1.0
    p0: float = 1e-2
    sigma_q: float = 0.0
    r_meas: float = 1.0
    variant: str = "TAGK"
    iterations_T: Optional[int] = None
    burn_in_tb: Optional[int] = None
    safety_filter: Optional[bool] = None

    def __post_init__(self):
        if self.kind not in ("rls", "kf", "kaczmarz", "oracle"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")

    @property
    def filtered(self):
        if self.safety_filter is not None:
            return self.safety_filter
        return self.kind in ("rls", "kf")


CATALOG = {
    "rls_low": EstimatorSpec("rls_low", "rls", lam=0.99),
    "rls_high": EstimatorSpec("rls_high", "rls", lam=0.96),
    "kf_low": EstimatorSpec("kf_low", "kf", sigma_q=1e-3),
    "kf_high": EstimatorSpec("kf_high", "kf", sigma_q=1e-1),
    "tagk": EstimatorSpec("tagk", "kaczmarz", variant="TAGK"),
    "rk": EstimatorSpec("rk", "kaczmarz", variant="RK"),
    "grk": EstimatorSpec("grk", "kaczmarz", variant="GRK"),
    "tark": EstimatorSpec("tark", "kaczmarz", variant="TARK"),
    "oracle": EstimatorSpec("oracle", "oracle"),
}
BASELINES = ("rls_low", "rls_high", "kf_low", "kf_high")
KACZMARZ = ("rk", "tark", "grk", "tagk")

# RNG stream ids under an episode seed are 100 + this offset
_STREAM_BASE = 100


def resolve_spec(spec):
    if isinstance(spec, EstimatorSpec):
        return spec
    try:
        return CATALOG[spec]
    except KeyError:
        raise ValueError(f"unknown estimator {spec!r}; choose from {sorted(CATALOG)}") from None


class OnlineEstimator:
    """Uniform ``step(block) -> theta`` wrapper over the estimator states."""

    def __init__(self, spec, theta0, seed=0, instance_id=None):
        self.spec = resolve_spec(spec)
        self.safety_filter = self.spec.filtered
        self.truth = None
        theta0 = as_vector(theta0)
        n = theta0.shape[0]
        if instance_id is None:
            instance_id = _STREAM_BASE + sorted(CATALOG).index(self.spec.name) if self.spec.name in CATALOG else _STREAM_BASE
        kind = self.spec.kind
        if kind == "rls":
            self.state = RlsState(theta0, self.spec.p0 * np.eye(n), self.spec.lam)
        elif kind == "kf":
            q = self.spec.sigma_q**2 * np.eye(n)
            self.state = KfState(theta0, self.spec.p0 * np.eye(n), q, np.float64(self.spec.r_meas))
        elif kind == "kaczmarz":
            cfg = SolverConfig(self.spec.variant, self.spec.iterations_T, self.spec.burn_in_tb)
            self.state = KaczmarzState.start(theta0, cfg, make_rng(seed, instance_id))
        else:
            self.state = None
            self._theta = theta0.copy()

    @property
    def name(self):
        return self.spec.name

    @property
    def theta(self):
        return self._theta if self.state is None else self.state.theta

    def step(self, block):
        if self.state is None:
            if self.truth is None:
                raise ValueError("oracle estimator needs .truth set before each step")
            self._theta = as_vector(self.truth).copy()
            return self._theta.copy()
        return estimator_step(self.state, block)

    def substitute(self, theta):
        """Overwrite the current estimate; covariances are kept."""
        theta = as_vector(theta).copy()
        if self.state is None:
            self._theta = theta
        else:
            self.state.theta = theta


def make_estimator(spec, theta0, seed=0, instance_id=None):
    return OnlineEstimator(spec, theta0, seed=seed, instance_id=instance_id)
