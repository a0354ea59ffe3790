"""Quadrotor rigid-body model: forward-Euler dynamics and finite-difference linearisation.

The flat simulation state is ``x = [p (3, world), q (4, w-x-y-z body->world),
v (3, world), omega (3, body)]``.  Linearisations use the 12-dimensional
error coordinates ``[dp, dphi, dv, domega]`` where ``dphi`` is a body-frame
rotation vector.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..linalg import _cholesky, _cholesky_solve
from ..physics import GRAVITY, InertialParams

NX = 13
NE = 12
NU = 4

# Crazyflie 2.1 class defaults (configurable; see README for the source values)
CF_MASS = 0.035
CF_INERTIA = np.array(
    [
        [1.66e-5, 0.83e-6, 0.72e-6],
        [0.83e-6, 1.66e-5, 1.8e-6],
        [0.72e-6, 1.8e-6, 2.93e-5],
    ]
)
CF_ARM = 0.046
CF_YAW_COEFF = 0.0008
CF_THRUST_MAX = 0.2


def crazyflie_params():
    return InertialParams.from_physical(CF_MASS, np.zeros(3), CF_INERTIA)


class SimulationFault(RuntimeError):
    """Non-finite state or a non-physical plant."""


@dataclass
class QuadModel:
    nominal_params: InertialParams = field(default_factory=crazyflie_params)
    arm_length: float = CF_ARM
    yaw_coeff: float = CF_YAW_COEFF
    thrust_min: float = 0.0
    thrust_max: float = CF_THRUST_MAX
    dt: float = 0.02
    gravity: float = GRAVITY

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if np.linalg.matrix_rank(self.mixing) != NU:
            raise ValueError("mixing matrix is rank deficient")

    @property
    def mixing(self):
        """6x4 map from motor thrusts (N) to the body wrench [torque; force]."""
        el = self.arm_length / math.sqrt(2.0)
        k = self.yaw_coeff
        return np.array(
            [
                [-el, -el, el, el],
                [-el, el, el, -el],
                [-k, k, -k, k],
                [0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0],
                [1.0, 1.0, 1.0, 1.0],
            ]
        )

    def clamp(self, u):
        return np.clip(u, self.thrust_min, self.thrust_max)


@dataclass
class SimState:
    position: np.ndarray
    quaternion: np.ndarray  # w, x, y, z
    velocity: np.ndarray  # world frame
    angular_velocity: np.ndarray  # body frame

    @classmethod
    def hover(cls, position=(0.0, 0.0, 0.0)):
        return cls(np.array(position, float), np.array([1.0, 0, 0, 0]), np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=np.float64)
        return cls(x[0:3].copy(), x[3:7].copy(), x[7:10].copy(), x[10:13].copy())

    def to_vector(self):
        return np.concatenate([self.position, self.quaternion, self.velocity, self.angular_velocity])

    @property
    def rotation(self):
        return quat_to_rot(np.asarray(self.quaternion, dtype=np.float64))


# --------------------------------------------------------------------------
# compiled dynamics
# --------------------------------------------------------------------------


@njit(cache=True)
def quat_to_rot(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@njit(cache=True)
def quat_mul(a, b):
    return np.array(
        [
            a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
        ]
    )


@njit(cache=True)
def quat_exp(phi):
    """Unit quaternion of the rotation vector ``phi``."""
    ang = math.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    if ang < 1e-12:
        return np.array([1.0, 0.5 * phi[0], 0.5 * phi[1], 0.5 * phi[2]])
    s = math.sin(0.5 * ang) / ang
    return np.array([math.cos(0.5 * ang), s * phi[0], s * phi[1], s * phi[2]])


@njit(cache=True)
def quat_log(q):
    """Rotation vector of a unit quaternion (shortest arc)."""
    w = q[0]
    x, y, z = q[1], q[2], q[3]
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    nv = math.sqrt(x * x + y * y + z * z)
    if nv < 1e-12:
        return np.array([2.0 * x, 2.0 * y, 2.0 * z])
    ang = 2.0 * math.atan2(nv, w)
    return np.array([x, y, z]) * (ang / nv)


@njit(cache=True)
def _cross(a, b):
    return np.array(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


@njit(cache=True)
def accelerations(x, u, theta, mix, g):
    """Angular and linear (body-axes) accelerations of the body origin.

    Returns ``(acc6, ok)`` with ``acc6 = [domega; a_body]``; ``ok`` is False when
    the spatial inertia is not positive definite.
    """
    q = x[3:7]
    R = quat_to_rot(q)
    w = x[10:13]
    gb = np.empty(3)
    for i in range(3):
        gb[i] = -g * R[2, i]
    m = theta[0]
    c = theta[1:4]
    I = np.array(
        [
            [theta[4], theta[5], theta[6]],
            [theta[5], theta[7], theta[8]],
            [theta[6], theta[8], theta[9]],
        ]
    )
    wrench = mix @ u
    Iw = I @ w
    rhs = np.empty((6, 1))
    gyro = _cross(w, Iw)
    cg = _cross(c, gb)
    wwc = _cross(w, _cross(w, c))
    for i in range(3):
        rhs[i, 0] = wrench[i] - gyro[i] + cg[i]
        rhs[3 + i, 0] = wrench[3 + i] - wwc[i] + m * gb[i]
    M = np.zeros((6, 6))
    for i in range(3):
        for j in range(3):
            M[i, j] = I[i, j]
        M[3 + i, 3 + i] = m
    # skew(c) couplings
    M[0, 4] = -c[2]
    M[0, 5] = c[1]
    M[1, 3] = c[2]
    M[1, 5] = -c[0]
    M[2, 3] = -c[1]
    M[2, 4] = c[0]
    for i in range(3):
        for j in range(3):
            M[3 + i, j] = -M[i, 3 + j]
    L = np.empty((6, 6))
    if not _cholesky(M, L):
        return np.zeros(6), False
    _cholesky_solve(L, rhs)
    return rhs[:, 0].copy(), True


@njit(cache=True)
def euler_step(x, u, theta, mix, g, dt):
    """One forward-Euler step; returns ``(x_next, acc6, ok)``."""
    acc, ok = accelerations(x, u, theta, mix, g)
    xn = np.empty(13)
    if not ok:
        xn[:] = np.nan
        return xn, acc, False
    R = quat_to_rot(x[3:7])
    a_world = R @ acc[3:6]
    for i in range(3):
        xn[i] = x[i] + dt * x[7 + i]
        xn[7 + i] = x[7 + i] + dt * a_world[i]
        xn[10 + i] = x[10 + i] + dt * acc[i]
    wq = np.array([0.0, x[10], x[11], x[12]])
    dq = quat_mul(x[3:7], wq)
    nq = 0.0
    for i in range(4):
        xn[3 + i] = x[3 + i] + 0.5 * dt * dq[i]
        nq += xn[3 + i] ** 2
    nq = math.sqrt(nq)
    for i in range(4):
        xn[3 + i] /= nq
    return xn, acc, True


@njit(cache=True)
def retract(x, dx):
    """x (+) dx in error coordinates."""
    out = x.copy()
    for i in range(3):
        out[i] = x[i] + dx[i]
        out[7 + i] = x[7 + i] + dx[6 + i]
        out[10 + i] = x[10 + i] + dx[9 + i]
    out[3:7] = quat_mul(x[3:7], quat_exp(dx[3:6]))
    return out


@njit(cache=True)
def local(x0, x):
    """Error coordinates of ``x`` relative to ``x0``."""
    d = np.empty(12)
    for i in range(3):
        d[i] = x[i] - x0[i]
        d[6 + i] = x[7 + i] - x0[7 + i]
        d[9 + i] = x[10 + i] - x0[10 + i]
    q0 = x0[3:7]
    q0i = np.array([q0[0], -q0[1], -q0[2], -q0[3]])
    d[3:6] = quat_log(quat_mul(q0i, x[3:7]))
    return d


# --------------------------------------------------------------------------
# Python surface
# --------------------------------------------------------------------------


def step_dynamics(model, state, thrusts, true_params):
    """Advance ``state`` by one timestep under the (clamped) motor thrusts."""
    x = state.to_vector() if isinstance(state, SimState) else np.asarray(state, dtype=np.float64)
    u = model.clamp(np.asarray(thrusts, dtype=np.float64))
    xn, _, ok = euler_step(x, u, true_params.theta, model.mixing, model.gravity, model.dt)
    if not ok or not np.all(np.isfinite(xn)):
        raise SimulationFault("non-finite state or non-physical plant")
    return SimState.from_vector(xn)


def hover_thrusts(model, params):
    """Motor thrusts holding a level hover for the given parameters.

    Level equilibrium needs ``fz = m g`` and a torque cancelling the
    gravity moment of the first moment ``c``.
    """
    c = params.theta[1:4]
    gb = np.array([0.0, 0.0, -model.gravity])
    torque = -np.cross(c, gb)
    target = np.array([torque[0], torque[1], torque[2], params.mass * model.gravity])
    rows = [0, 1, 2, 5]
    return np.linalg.solve(model.mixing[rows], target)


def linearize(model, params, x_op=None, u_op=None, rel_step=1e-6):
    """Discrete Jacobians of ``euler_step`` in error coordinates (central differences)."""
    theta = params.theta
    if not params.mass > 0 or np.linalg.eigvalsh(params.spatial_inertia())[0] <= 0:
        raise ValueError("linearize needs physically valid parameters")
    if x_op is None:
        x_op = SimState.hover().to_vector()
    x_op = np.asarray(x_op, dtype=np.float64)
    if u_op is None:
        u_op = hover_thrusts(model, params)
    u_op = np.asarray(u_op, dtype=np.float64)
    mix = model.mixing
    g, dt = model.gravity, model.dt
    x_next, _, _ = euler_step(x_op, u_op, theta, mix, g, dt)
    A = np.empty((NE, NE))
    B = np.empty((NE, NU))
    mags = np.abs(local(SimState.hover().to_vector(), x_op))
    for i in range(NE):
        h = rel_step * max(1.0, mags[i])
        e = np.zeros(NE)
        e[i] = h
        xp, _, _ = euler_step(retract(x_op, e), u_op, theta, mix, g, dt)
        xm, _, _ = euler_step(retract(x_op, -e), u_op, theta, mix, g, dt)
        A[:, i] = (local(x_next, xp) - local(x_next, xm)) / (2 * h)
    for i in range(NU):
        h = rel_step * max(1.0, abs(u_op[i]))
        up = u_op.copy()
        um = u_op.copy()
        up[i] += h
        um[i] -= h
        xp, _, _ = euler_step(x_op, up, theta, mix, g, dt)
        xm, _, _ = euler_step(x_op, um, theta, mix, g, dt)
        B[:, i] = (local(x_next, xp) - local(x_next, xm)) / (2 * h)
    return A, B
