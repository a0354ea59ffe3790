"""Single-rigid-body inertial parameters, Newton-Euler regressor and safety filter.

Parameter layout (inertia about the body-frame origin)::

    [m, m*cx, m*cy, m*cz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz]

Wrenches and regressor rows are ordered ``[torque (3); force (3)]`` in the
body frame, matching the twist ordering ``(angular, linear)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import sym_eig3

N_PARAMS = 10
GRAVITY = 9.81


def skew(v):
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def inertia_action(v):
    """3x6 matrix L(v) with ``I @ v == L(v) @ [Ixx, Ixy, Ixz, Iyy, Iyz, Izz]``."""
    x, y, z = v
    return np.array(
        [
            [x, y, z, 0.0, 0.0, 0.0],
            [0.0, x, 0.0, y, z, 0.0],
            [0.0, 0.0, x, 0.0, y, z],
        ]
    )


@dataclass(frozen=True)
class InertialParams:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.size % N_PARAMS:
            raise ValueError(f"parameter vector length {theta.size} is not a multiple of 10")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_physical(cls, mass, com, inertia):
        """Build from mass, centre of mass and the 3x3 inertia about the origin."""
        c = mass * np.asarray(com, dtype=np.float64)
        I = np.asarray(inertia, dtype=np.float64)
        return cls(
            np.array([mass, *c, I[0, 0], I[0, 1], I[0, 2], I[1, 1], I[1, 2], I[2, 2]])
        )

    @property
    def mass(self):
        return float(self.theta[0])

    @property
    def first_moment(self):
        return self.theta[1:4].copy()

    @property
    def com(self):
        return self.theta[1:4] / self.theta[0]

    @property
    def inertia(self):
        xx, xy, xz, yy, yz, zz = self.theta[4:10]
        return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])

    def spatial_inertia(self):
        """6x6 matrix mapping (angular, linear) acceleration to (torque, force)."""
        c = skew(self.theta[1:4])
        M = np.zeros((6, 6))
        M[:3, :3] = self.inertia
        M[:3, 3:] = c
        M[3:, :3] = -c
        M[3:, 3:] = self.mass * np.eye(3)
        return M


@dataclass(frozen=True)
class BodyState:
    """Kinematics entering the regressor.

    ``velocity`` and ``acceleration`` are ``(angular, linear)`` 6-vectors in
    the body frame; the linear acceleration is that of the body origin
    (inertial acceleration expressed in body axes).  ``gravity`` is in the
    world frame.
    """

    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(6))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(6))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -GRAVITY]))

    def __post_init__(self):
        R = np.asarray(self.orientation, dtype=np.float64)
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9:
            raise ValueError("orientation is not orthonormal")

    @property
    def gravity_body(self):
        return np.asarray(self.orientation).T @ np.asarray(self.gravity, dtype=np.float64)


@dataclass(frozen=True)
class Wrench:
    torque: np.ndarray
    force: np.ndarray

    def as_vector(self):
        return np.concatenate([self.torque, self.force])


@dataclass(frozen=True)
class SafetyLimits:
    arm_length: float
    alpha: float

    def __post_init__(self):
        if not (self.arm_length > 0 and self.alpha > 0):
            raise ValueError("safety limits must be positive")

    @classmethod
    def for_nominal(cls, nominal, arm_length, factor=10.0):
        """Eigenvalue bound at ``factor`` times the largest nominal principal inertia."""
        return cls(arm_length, factor * float(sym_eig3(nominal.inertia)[-1]))


def regressor_block(state):
    """6x10 matrix A(state) with ``A @ theta`` equal to the body wrench."""
    w = np.asarray(state.velocity[:3], dtype=np.float64)
    dw = np.asarray(state.acceleration[:3], dtype=np.float64)
    a = np.asarray(state.acceleration[3:], dtype=np.float64)
    d = a - state.gravity_body
    W = skew(w)
    A = np.zeros((6, N_PARAMS))
    A[0:3, 1:4] = -skew(d)
    A[0:3, 4:10] = inertia_action(dw) + W @ inertia_action(w)
    A[3:6, 0] = d
    A[3:6, 1:4] = skew(dw) + W @ W
    return A


def newton_euler(state, params):
    """Net actuator wrench about the body origin, written with cross products."""
    m = params.mass
    c = params.theta[1:4]
    I = params.inertia
    w = np.asarray(state.velocity[:3], dtype=np.float64)
    dw = np.asarray(state.acceleration[:3], dtype=np.float64)
    d = np.asarray(state.acceleration[3:], dtype=np.float64) - state.gravity_body
    force = m * d + np.cross(dw, c) + np.cross(w, np.cross(w, c))
    torque = I @ dw + np.cross(w, I @ w) + np.cross(c, d)
    return Wrench(torque=torque, force=force)


def payload_delta(payload_mass, offset):
    """Point-mass contribution to the parameter vector."""
    if payload_mass < 0:
        raise ValueError("payload mass must be non-negative")
    r = np.asarray(offset, dtype=np.float64)
    J = payload_mass * (float(r @ r) * np.eye(3) - np.outer(r, r))
    return np.array(
        [payload_mass, *(payload_mass * r), J[0, 0], J[0, 1], J[0, 2], J[1, 1], J[1, 2], J[2, 2]]
    )


def compose_payload(base, payload_mass, offset):
    """Add a point-mass payload at body-frame ``offset`` (parallel-axis)."""
    return InertialParams(base.theta + payload_delta(payload_mass, offset))


def remove_payload(composite, payload_mass, offset):
    return InertialParams(composite.theta - payload_delta(payload_mass, offset))


@dataclass(frozen=True)
class SafetyResult:
    accepted: bool
    reason: str = ""

    def __bool__(self):
        return self.accepted


ACCEPT = SafetyResult(True)


def safety_check(params, limits):
    """Physical-consistency gate; the reason names the first failed test."""
    theta = params.theta
    if theta.size != N_PARAMS:
        raise ValueError("safety_check expects a single body")
    if not np.all(np.isfinite(theta)):
        return SafetyResult(False, "non-finite")
    m = params.mass
    if not m > 0:
        return SafetyResult(False, "mass")
    if np.linalg.norm(params.com) > limits.arm_length:
        return SafetyResult(False, "com")
    eig = sym_eig3(params.inertia)
    if not eig[0] > 0:
        return SafetyResult(False, "positive-definiteness")
    if np.max(np.abs(eig)) > limits.alpha:
        return SafetyResult(False, "eigenvalue-bound")
    return ACCEPT
