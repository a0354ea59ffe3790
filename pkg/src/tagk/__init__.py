"""Online inertial-parameter estimation with tail-averaged greedy Kaczmarz and baselines."""

__version__ = "0.1.0"
