"""Quadrotor payload-transfer simulator with an LQR tracking loop."""

from .control import LqrWeights, UnstabilizableError, lqr_gain
from .episode import (
    EpisodeConfig,
    NoiseModel,
    Trace,
    build_measurement_window,
    classify_outcome,
    inject_noise,
    metrics,
    run_episode,
)
from .model import QuadModel, SimState, SimulationFault, hover_thrusts, linearize, step_dynamics
from .reference import TRAJECTORIES, Trajectory, reference
