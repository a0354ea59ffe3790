"""Closed-loop payload-transfer episode: fast LQR loop, slow parameter estimator."""

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit

from ..estimators import MeasurementBlock, make_estimator, make_rng
from ..linalg import NotPositiveDefiniteError
from ..physics import BodyState, InertialParams, SafetyLimits, compose_payload, regressor_block, safety_check
from .control import LqrWeights, UnstabilizableError, lqr_gain
from .model import (
    NX,
    QuadModel,
    SimState,
    accelerations,
    euler_step,
    hover_thrusts,
    linearize,
    quat_log,
    quat_to_rot,
)
from .reference import TRAJECTORIES, Trajectory

NOISE_LEVELS = {"none": 0.0, "low": 1.0 / 3.0, "medium": 2.0 / 3.0, "high": 1.0}
SIGMA_V_MAX = 0.025  # m/s
SIGMA_A_MAX = 0.0025  # m/s^2

ABORT_RADIUS = 1.5  # m
SUCCESS_RMS = 0.05  # m, over the final SUCCESS_WINDOW seconds
SUCCESS_WINDOW = 2.0

SUCCESS, ABORTED, INCOMPLETE = "success", "aborted", "incomplete"

EVENT_ADD, EVENT_DROP = 1, 2

# stream ids under the episode seed
_STREAM_CONFIG, _STREAM_NOISE = 0, 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    sigma_v: float = 0.0
    sigma_a: float = 0.0

    def __post_init__(self):
        if self.sigma_v < 0 or self.sigma_a < 0:
            raise ConfigError("noise standard deviations must be non-negative")
        if self.sigma_v > SIGMA_V_MAX + 1e-15 or self.sigma_a > SIGMA_A_MAX + 1e-15:
            raise ConfigError("noise exceeds the modelled sensor maxima")

    @classmethod
    def level(cls, name):
        if name not in NOISE_LEVELS:
            raise ConfigError(f"unknown noise level {name!r}; choose from {tuple(NOISE_LEVELS)}")
        f = NOISE_LEVELS[name]
        return cls(f * SIGMA_V_MAX, f * SIGMA_A_MAX)


def inject_noise(state, accel, noise, rng):
    """Gaussian noise on the velocity entries (linear and angular) and on the accelerations."""
    accel = np.asarray(accel, dtype=np.float64)
    if noise.sigma_v == 0 and noise.sigma_a == 0:
        return state, accel.copy()
    nv = rng.standard_normal(6) * noise.sigma_v
    na = rng.standard_normal(accel.shape) * noise.sigma_a
    noisy = SimState(
        state.position.copy(),
        state.quaternion.copy(),
        state.velocity + nv[:3],
        state.angular_velocity + nv[3:],
    )
    return noisy, accel + na


@dataclass
class EpisodeConfig:
    trajectory: str = "Figure8"
    duration: float = 20.0
    control_rate: float = 50.0
    estimator_rate: float = 2.5
    history_frames: int = 5
    payload_mass_fraction: float = 0.4
    offset_fraction: float = 0.25
    offset_angle: float = 0.0
    add_time: float = 5.0
    drop_time: float = 13.0
    noise: str = "none"
    seed: int = 0
    traj_scale: float = 1.0
    traj_phase: float = 0.0
    start_offset: tuple = (0.0, 0.0, 0.0)
    events: bool = True
    adopt_inertia: bool = False

    def __post_init__(self):
        if self.trajectory not in TRAJECTORIES:
            raise ConfigError(f"unknown trajectory {self.trajectory!r}")
        NoiseModel.level(self.noise)
        if self.events:
            if not 0.30 - 1e-12 <= self.payload_mass_fraction <= 0.50 + 1e-12:
                raise ConfigError("payload mass fraction outside [0.30, 0.50]")
            if not 0.20 - 1e-12 <= self.offset_fraction <= 0.30 + 1e-12:
                raise ConfigError("offset fraction outside [0.20, 0.30]")
            if not 0 <= self.add_time < self.drop_time < self.duration:
                raise ConfigError("need add_time < drop_time < duration")
        ratio = self.control_rate / self.estimator_rate
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("control rate must be an integer multiple of the estimator rate")
        if self.history_frames < 1 or self.history_frames > round(ratio):
            raise ConfigError("history must fit between estimator steps")
        self.start_offset = tuple(float(v) for v in self.start_offset)

    @property
    def kappa(self):
        return int(round(self.control_rate / self.estimator_rate))

    @property
    def dt(self):
        return 1.0 / self.control_rate

    @property
    def n_steps(self):
        return int(round(self.duration * self.control_rate))

    @property
    def noise_model(self):
        return NoiseModel.level(self.noise)

    @property
    def trajectory_spec(self):
        return Trajectory(self.trajectory, self.traj_scale, self.traj_phase)

    @classmethod
    def sample(cls, seed, noise="none", trajectory=None, start_radius=0.2, **overrides):
        """Randomised episode: shape, size, phase, start point, events and payload."""
        rng = make_rng(seed, _STREAM_CONFIG)
        name = TRAJECTORIES[int(rng.integers(len(TRAJECTORIES)))]
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        radius = start_radius * rng.random() ** (1.0 / 3.0)
        cfg = dict(
            trajectory=trajectory or name,
            traj_scale=float(rng.uniform(0.9, 1.1)),
            traj_phase=float(rng.uniform(0.0, 2 * math.pi)),
            payload_mass_fraction=float(rng.uniform(0.30, 0.50)),
            offset_fraction=float(rng.uniform(0.20, 0.30)),
            offset_angle=float(rng.uniform(0.0, 2 * math.pi)),
            add_time=float(rng.uniform(4.0, 6.0)),
            drop_time=float(rng.uniform(12.0, 14.0)),
            start_offset=tuple(float(v) for v in radius * direction),
            noise=noise,
            seed=int(seed),
        )
        cfg.update(overrides)
        return cls(**cfg)

    def payload(self, model):
        """Payload mass and body-frame offset (horizontal, at the arm fraction)."""
        m_p = self.payload_mass_fraction * model.nominal_params.mass
        r = self.offset_fraction * model.arm_length
        return m_p, np.array([r * math.cos(self.offset_angle), r * math.sin(self.offset_angle), 0.0])

    def event_steps(self):
        if not self.events:
            return None, None
        return int(math.ceil(self.add_time * self.control_rate - 1e-9)), int(
            math.ceil(self.drop_time * self.control_rate - 1e-9)
        )


@dataclass
class Trace:
    """Recorded episode, one row per control step (plus an abort/fault row)."""

    t: np.ndarray
    ref_pos: np.ndarray
    pos: np.ndarray
    quat: np.ndarray
    vel: np.ndarray
    omega: np.ndarray
    u: np.ndarray
    theta_true: np.ndarray
    theta_hat: np.ndarray
    event_flag: np.ndarray
    outcome: str = INCOMPLETE
    n_steps: int = 0
    dt: float = 0.02
    fault: str = ""
    # not serialised
    ref_vel: Optional[np.ndarray] = None
    noisy_vel: Optional[np.ndarray] = None
    noisy_omega: Optional[np.ndarray] = None
    noisy_accel: Optional[np.ndarray] = None
    wrench: Optional[np.ndarray] = None
    est_times_us: list = field(default_factory=list)
    rejections: int = 0
    history_frames: int = 5
    blocks: list = field(default_factory=list)

    @property
    def estimator_rows(self):
        return np.flatnonzero(np.all(np.isfinite(self.theta_hat), axis=1))

    @property
    def event_rows(self):
        return np.flatnonzero(self.event_flag != 0)

    @property
    def completed(self):
        return len(self.t) == self.n_steps and not self.fault


class Controller:
    """LQR about the level hover of the currently accepted parameter estimate."""

    def __init__(self, model, weights=None):
        self.model = model
        self.Q, self.R = (weights or LqrWeights()).matrices()
        self.params = None
        self.K = None
        self.u_trim = None
        self.updates = 0

    def update(self, params):
        if self.params is not None and np.array_equal(params.theta, self.params.theta):
            return False
        A, B = linearize(self.model, params)
        self.K = lqr_gain(A, B, self.Q, self.R)
        self.u_trim = hover_thrusts(self.model, params)
        self.params = params
        self.updates += 1
        return True


def physically_valid(params):
    """Positive definite spatial inertia (mass and inertia about the centre of mass)."""
    if not np.all(np.isfinite(params.theta)) or not params.mass > 0:
        return False
    try:
        np.linalg.cholesky(params.spatial_inertia())
    except np.linalg.LinAlgError:
        return False
    return True


def frame_state(R, omega, accel6, gravity):
    return BodyState(
        orientation=R,
        velocity=np.concatenate([omega, np.zeros(3)]),
        acceleration=accel6,
        gravity=np.array([0.0, 0.0, -gravity]),
    )


def _admissible(params, limits, use_filter):
    if not physically_valid(params):
        return False
    return not use_filter or bool(safety_check(params, limits))


def accept_estimate(theta, previous, limits, use_filter, inertia=None):
    """Parameters the controller may adopt, or None to keep the previous model.

    The inertia entries are weakly excited in near-hover flight and are the
    first to go non-physical.  With ``inertia`` given (6 entries), only the
    estimated mass and first moment are adopted and the inertia is held.
    Otherwise the full estimate is tried first, then its mass and first
    moment together with the previously accepted inertia.
    """
    if inertia is not None:
        held = InertialParams(np.concatenate([np.asarray(theta)[:4], inertia]))
        return held if _admissible(held, limits, use_filter) else None
    params = InertialParams(theta)
    if _admissible(params, limits, use_filter):
        return params
    if previous is None:
        return None
    merged = np.concatenate([params.theta[:4], previous.theta[4:]])
    merged = InertialParams(merged)
    return merged if _admissible(merged, limits, use_filter) else None


def build_measurement_window(history):
    """Stack ``(BodyState, wrench6)`` frames into one block (6 rows per frame)."""
    if not history:
        raise ValueError("insufficient history")
    A = np.vstack([regressor_block(s) for s, _ in history])
    b = np.concatenate([np.asarray(w, dtype=np.float64) for _, w in history])
    return MeasurementBlock(A, b)


@njit(cache=True)
def _run_segment(
    X, U, ACC, k0, k1, K, u_trim, pref, vref, theta_seq, nv, mix, g, dt, umin, umax, abort_r
):
    """Advance rows k0..k1-1 in place.  Returns (last_row, status); status 0 ok, 1 fault, 2 abort."""
    for k in range(k0, k1):
        x = X[k]
        err = np.empty(12)
        for i in range(3):
            err[i] = x[i] - pref[k, i]
            err[6 + i] = x[7 + i] + nv[k, i] - vref[k, i]
            err[9 + i] = x[10 + i] + nv[k, 3 + i]
        err[3:6] = quat_log(x[3:7])
        u = u_trim - K @ err
        for i in range(4):
            u[i] = min(max(u[i], umin), umax)
        xn, acc, ok = euler_step(x, u, theta_seq[k], mix, g, dt)
        U[k] = u
        ACC[k] = acc
        if not ok:
            return k, 1
        for i in range(13):
            if not math.isfinite(xn[i]):
                return k, 1
        X[k + 1] = xn
        d2 = 0.0
        for i in range(3):
            d2 += (xn[i] - pref[k + 1, i]) ** 2
        if d2 > abort_r * abort_r:
            return k + 1, 2
    return k1, 0


def true_parameter_schedule(cfg, model):
    """Per-row ground truth: nominal, composite in [add, drop), nominal again."""
    n = cfg.n_steps
    nominal = model.nominal_params
    theta = np.tile(nominal.theta, (n + 1, 1))
    flags = np.zeros(n + 1, dtype=np.int64)
    k_add, k_drop = cfg.event_steps()
    if k_add is not None:
        m_p, offset = cfg.payload(model)
        composite = compose_payload(nominal, m_p, offset)
        k_add = min(k_add, n)
        k_drop = min(k_drop, n)
        theta[k_add:k_drop] = composite.theta
        if k_add < n:
            flags[k_add] = EVENT_ADD
        if k_drop < n:
            flags[k_drop] = EVENT_DROP
    return theta, flags


def run_episode(
    cfg,
    estimator="tagk",
    model=None,
    weights=None,
    substitute_with=None,
    record_blocks=False,
    safety_filter=None,
):
    """Simulate one episode and return its Trace.

    ``estimator`` is a catalog name or an EstimatorSpec.  With
    ``substitute_with`` a shadow estimator runs on the same blocks and, at the
    first estimator step after each event, its output replaces the primary
    estimate (the primary then continues from it).
    """
    model = model or QuadModel()
    n = cfg.n_steps
    kappa = cfg.kappa
    H = cfg.history_frames
    dt = cfg.dt
    if abs(dt - model.dt) > 1e-15:
        model = replace(model, dt=dt)
    mix = model.mixing
    g = model.gravity
    nominal = model.nominal_params
    limits = SafetyLimits.for_nominal(nominal, model.arm_length)

    traj = cfg.trajectory_spec
    ts = np.arange(n + 1) * dt
    pref, vref, _ = traj.sample(ts)
    theta_seq, flags = true_parameter_schedule(cfg, model)

    noise = cfg.noise_model
    nrng = make_rng(cfg.seed, _STREAM_NOISE)
    nv = rng_normal(nrng, (n + 1, 6), noise.sigma_v)
    na = rng_normal(nrng, (n + 1, 6), noise.sigma_a)

    est = make_estimator(estimator, nominal.theta, seed=cfg.seed)
    if safety_filter is not None:
        est.safety_filter = safety_filter
    shadow = make_estimator(substitute_with, nominal.theta, seed=cfg.seed) if substitute_with else None

    held_inertia = None if cfg.adopt_inertia else nominal.theta[4:].copy()
    ctrl = Controller(model, weights)
    ctrl.update(nominal)

    X = np.full((n + 1, NX), np.nan)
    X[0] = SimState(pref[0] + np.asarray(cfg.start_offset), np.array([1.0, 0, 0, 0]), np.zeros(3), np.zeros(3)).to_vector()
    U = np.full((n + 1, 4), np.nan)
    ACC = np.full((n + 1, 6), np.nan)
    theta_hat = np.full((n + 1, 10), np.nan)

    k_events = np.flatnonzero(flags)
    pending_sub = set(int(k) for k in k_events)
    status, last = 0, 0
    fault = ""
    est_times = []
    blocks = []
    rejections = 0
    k = 0
    while k < n:
        k_next = min(k + kappa, n)
        last, status = _run_segment(
            X, U, ACC, k, k_next, ctrl.K, ctrl.u_trim, pref, vref, theta_seq, nv,
            mix, g, dt, model.thrust_min, model.thrust_max, ABORT_RADIUS,
        )
        if status:
            fault = "simulation fault" if status == 1 else ""
            break
        k = k_next
        if k >= n or k % kappa:
            continue
        # estimator step at row k using frames k-H .. k-1
        history = []
        for j in range(k - H, k):
            R = quat_to_rot(X[j, 3:7])
            omega = X[j, 10:13] + nv[j, 3:6]
            acc = ACC[j] + na[j]
            history.append((frame_state(R, omega, acc, g), mix @ U[j]))
        block = build_measurement_window(history)
        if record_blocks:
            blocks.append((k, block))
        est.truth = theta_seq[k]
        t0 = time.perf_counter_ns()
        try:
            theta = est.step(block)
        except NotPositiveDefiniteError:
            fault = "estimator fault"
            status = 1
            last = k
            break
        est_times.append((time.perf_counter_ns() - t0) / 1e3)
        if shadow is not None:
            shadow.truth = est.truth
            theta_sub = shadow.step(block)
            due = [ke for ke in pending_sub if k - H >= ke]
            if due:
                for ke in due:
                    pending_sub.discard(ke)
                est.substitute(theta_sub)
                theta = est.theta.copy()
        theta_hat[k] = theta
        candidate = accept_estimate(theta, ctrl.params, limits, est.safety_filter, held_inertia)
        if candidate is None:
            rejections += 1
            continue
        try:
            ctrl.update(candidate)
        except UnstabilizableError:
            fault = "unstabilizable linearization"
            status = 1
            last = k
            break

    rows = n if status == 0 else last + 1
    trace = Trace(
        t=ts[:rows].copy(),
        ref_pos=pref[:rows].copy(),
        pos=X[:rows, 0:3].copy(),
        quat=X[:rows, 3:7].copy(),
        vel=X[:rows, 7:10].copy(),
        omega=X[:rows, 10:13].copy(),
        u=U[:rows].copy(),
        theta_true=theta_seq[:rows].copy(),
        theta_hat=theta_hat[:rows].copy(),
        event_flag=flags[:rows].copy(),
        n_steps=n,
        history_frames=H,
        dt=dt,
        fault=fault,
        ref_vel=vref[:rows].copy(),
        noisy_vel=X[:rows, 7:10] + nv[:rows, 0:3],
        noisy_omega=X[:rows, 10:13] + nv[:rows, 3:6],
        noisy_accel=ACC[:rows] + na[:rows],
        wrench=U[:rows] @ mix.T,
        est_times_us=est_times,
        rejections=rejections,
        blocks=blocks,
    )
    trace.outcome = classify_outcome(trace)
    return trace


def rng_normal(rng, shape, sigma):
    draws = rng.standard_normal(shape)
    return draws * sigma


def position_errors(trace):
    return np.linalg.norm(trace.pos - trace.ref_pos, axis=1)


def classify_outcome(trace):
    err = position_errors(trace)
    finite = np.all(np.isfinite(trace.pos), axis=1)
    if trace.fault or not np.all(finite) or np.any(err > ABORT_RADIUS):
        return ABORTED
    if len(trace.t) < trace.n_steps:
        return INCOMPLETE
    tail = trace.t >= trace.t[-1] + trace.dt - SUCCESS_WINDOW - 1e-9
    rms = math.sqrt(float(np.mean(err[tail] ** 2)))
    return SUCCESS if rms < SUCCESS_RMS else INCOMPLETE


@dataclass(frozen=True)
class EpisodeMetrics:
    pos_err_cm: float
    mean_est_err: float
    t_plus_1_est_err: float
    outcome: str
    n_estimator_steps: int
    t_plus_1_step_err: float = float("nan")


def relative_errors(trace):
    rows = trace.estimator_rows
    diff = np.linalg.norm(trace.theta_hat[rows] - trace.theta_true[rows], axis=1)
    return rows, diff / np.linalg.norm(trace.theta_true[rows], axis=1)


def first_step_after(rows, k_event, history_frames=0):
    """Index into ``rows`` of the first estimator step whose window starts at or after ``k_event``.

    With ``history_frames=0`` this is simply the first step after the event.
    """
    after = np.flatnonzero(rows - history_frames >= k_event) if history_frames else np.flatnonzero(rows > k_event)
    return int(after[0]) if after.size else None


def _mean_or_nan(values):
    return float(np.mean(values)) if len(values) else float("nan")


def metrics(trace):
    """Mean position error (cm), mean relative estimation error and its value just after events.

    ``t_plus_1_est_err`` is taken at the first estimator step whose whole
    measurement window postdates the event; ``t_plus_1_step_err`` at the
    first step after the event by time alone, whose window may still hold
    pre-event frames.
    """
    err = position_errors(trace)
    finite = np.isfinite(err)
    pos_err = float(np.mean(err[finite])) * 100.0 if np.any(finite) else float("nan")
    rows, rel = relative_errors(trace)
    mean_est = _mean_or_nan(rel)
    clean, naive = [], []
    for ke in trace.event_rows:
        i = first_step_after(rows, ke, trace.history_frames)
        if i is not None:
            clean.append(rel[i])
        i = first_step_after(rows, ke)
        if i is not None:
            naive.append(rel[i])
    return EpisodeMetrics(
        pos_err, mean_est, _mean_or_nan(clean), trace.outcome, int(rows.size), _mean_or_nan(naive)
    )


# --------------------------------------------------------------------------
# trace CSV
# --------------------------------------------------------------------------

TRACE_COLUMNS = (
    ["t", "ref_x", "ref_y", "ref_z", "x", "y", "z", "qw", "qx", "qy", "qz"]
    + ["vx", "vy", "vz", "wx", "wy", "wz", "u1", "u2", "u3", "u4"]
    + [f"theta_true_{i}" for i in range(10)]
    + [f"theta_hat_{i}" for i in range(10)]
    + ["event_flag", "outcome"]
)


def format_float(x):
    """Shortest round-tripping text; NaN becomes an empty cell."""
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def parse_float(s):
    return float("nan") if s == "" else float(s)


def _trace_matrix(trace):
    return np.column_stack(
        [
            trace.t, trace.ref_pos, trace.pos, trace.quat, trace.vel, trace.omega,
            trace.u, trace.theta_true, trace.theta_hat,
        ]
    )


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row, flag in zip(_trace_matrix(trace), trace.event_flag):
            w.writerow([format_float(v) for v in row] + [int(flag), trace.outcome])


def read_trace_csv(path, n_steps=None, history_frames=5):
    """Inverse of write_trace_csv.  ``n_steps`` defaults to the row count."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRACE_COLUMNS:
        raise ValueError(f"{path}: not a trace CSV")
    body = rows[1:]
    data = np.array([[parse_float(v) for v in r[:-2]] for r in body], dtype=np.float64).reshape(-1, 41)
    flags = np.array([int(r[-2]) for r in body], dtype=np.int64)
    outcome = body[0][-1] if body else INCOMPLETE
    t = data[:, 0]
    dt = float(t[1] - t[0]) if len(t) > 1 else 0.02
    return Trace(
        t=t,
        ref_pos=data[:, 1:4],
        pos=data[:, 4:7],
        quat=data[:, 7:11],
        vel=data[:, 11:14],
        omega=data[:, 14:17],
        u=data[:, 17:21],
        theta_true=data[:, 21:31],
        theta_hat=data[:, 31:41],
        event_flag=flags,
        outcome=outcome,
        n_steps=len(t) if n_steps is None else n_steps,
        dt=dt,
        history_frames=history_frames,
    )
