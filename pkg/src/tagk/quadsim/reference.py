"""Reference trajectories.

Every shape is sized so that, for scale factors in [0.9, 1.1], the peak
linear speed and the peak heading rate |v x a| / |v|^2 stay at or below
0.4 (m/s, rad/s), about 20 % under the 0.5 caps.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import SimState

TRAJECTORIES = ("Figure8", "Circle", "Spiral", "Helix", "Ellipse")
SPEED_CAP = 0.5
RATE_CAP = 0.5
HOVER_HEIGHT = 1.0


class TrajectoryError(ValueError):
    """Unknown trajectory name."""


@dataclass(frozen=True)
class Trajectory:
    name: str
    scale: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.name not in TRAJECTORIES:
            raise TrajectoryError(f"unknown trajectory {self.name!r}; choose from {TRAJECTORIES}")

    @property
    def period(self):
        return 2 * math.pi / _OMEGA[self.name](self.scale)

    def sample(self, t):
        """Position, velocity and acceleration (world frame) at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        return _SHAPES[self.name](t, self.scale, self.phase)


def _circle_omega(s):
    return 0.35 / s


def _circle(t, s, ph, radius=1.0, speed=0.35, climb=0.0):
    R = radius * s
    w = speed / R
    a = w * t + ph
    c, sn = np.cos(a), np.sin(a)
    p = np.stack([R * (c - math.cos(ph)), R * (sn - math.sin(ph)), HOVER_HEIGHT + climb * t], axis=-1)
    v = np.stack([-R * w * sn, R * w * c, np.full_like(t, climb)], axis=-1)
    acc = np.stack([-R * w * w * c, -R * w * w * sn, np.zeros_like(t)], axis=-1)
    return p, v, acc


def _helix(t, s, ph):
    return _circle(t, s, ph, radius=1.0, speed=0.35, climb=0.05)


def _ellipse(t, s, ph):
    a_ax, b_ax, w = 1.2 * s, 0.8 * s, 0.2
    ang = w * t + ph
    p = np.stack(
        [a_ax * (np.cos(ang) - math.cos(ph)), b_ax * (np.sin(ang) - math.sin(ph)), np.full_like(t, HOVER_HEIGHT)],
        axis=-1,
    )
    v = np.stack([-a_ax * w * np.sin(ang), b_ax * w * np.cos(ang), np.zeros_like(t)], axis=-1)
    acc = np.stack([-a_ax * w * w * np.cos(ang), -b_ax * w * w * np.sin(ang), np.zeros_like(t)], axis=-1)
    return p, v, acc


def _figure8(t, s, ph):
    # Gerono lemniscate: passes the centre twice per period
    A, B, w = 1.2 * s, 0.8 * s, 0.15
    ang = w * t + ph
    p = np.stack(
        [A * (np.sin(ang) - math.sin(ph)), 0.5 * B * (np.sin(2 * ang) - math.sin(2 * ph)), np.full_like(t, HOVER_HEIGHT)],
        axis=-1,
    )
    v = np.stack([A * w * np.cos(ang), B * w * np.cos(2 * ang), np.zeros_like(t)], axis=-1)
    acc = np.stack([-A * w * w * np.sin(ang), -2 * B * w * w * np.sin(2 * ang), np.zeros_like(t)], axis=-1)
    return p, v, acc


def _spiral(t, s, ph):
    r0, k, w = 0.6 * s, 0.03, 0.3
    r = r0 + k * t
    ang = w * t + ph
    c, sn = np.cos(ang), np.sin(ang)
    p = np.stack([r * c - r0 * math.cos(ph), r * sn - r0 * math.sin(ph), np.full_like(t, HOVER_HEIGHT)], axis=-1)
    v = np.stack([k * c - r * w * sn, k * sn + r * w * c, np.zeros_like(t)], axis=-1)
    acc = np.stack(
        [-2 * k * w * sn - r * w * w * c, 2 * k * w * c - r * w * w * sn, np.zeros_like(t)], axis=-1
    )
    return p, v, acc


_SHAPES = {
    "Figure8": _figure8,
    "Circle": _circle,
    "Spiral": _spiral,
    "Helix": _helix,
    "Ellipse": _ellipse,
}
_OMEGA = {
    "Figure8": lambda s: 0.15,
    "Circle": _circle_omega,
    "Spiral": lambda s: 0.3,
    "Helix": lambda s: 0.35 / s,
    "Ellipse": lambda s: 0.2,
}


def heading_rate(v, a):
    """Turn rate |v x a| / |v|^2 of the path (0 where the speed vanishes)."""
    cr = np.linalg.norm(np.cross(v, a), axis=-1)
    sp2 = np.einsum("...i,...i->...", v, v)
    return np.where(sp2 > 1e-12, cr / np.maximum(sp2, 1e-12), 0.0)


def reference(trajectory, t):
    """Reference SimState at time ``t``: level attitude, zero body rate."""
    if isinstance(trajectory, str):
        trajectory = Trajectory(trajectory)
    if t < 0:
        raise ValueError("reference time must be non-negative")
    p, v, _ = trajectory.sample(t)
    return SimState(p[0], np.array([1.0, 0.0, 0.0, 0.0]), v[0], np.zeros(3))
