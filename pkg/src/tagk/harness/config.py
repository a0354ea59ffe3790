"""Run configurations and YAML loading."""

import dataclasses
from dataclasses import dataclass
from typing import Optional

import yaml

from ..estimators import BASELINES, CATALOG
from ..quadsim.episode import NOISE_LEVELS


class ConfigError(ValueError):
    pass


def _check_names(names, allowed, what):
    bad = [n for n in names if n not in allowed]
    if bad:
        raise ConfigError(f"unknown {what}: {', '.join(bad)}")


@dataclass
class BenchConfig:
    sizes: tuple = (40, 60, 80, 100, 120)
    m: int = 30
    trials: int = 10
    warmup: int = 1
    estimators: tuple = ("tagk", "rls_low", "rls_high", "kf_low", "kf_high")
    seed: int = 0
    noise: float = 0.0

    def __post_init__(self):
        self.sizes = tuple(int(n) for n in self.sizes)
        self.estimators = tuple(self.estimators)
        if not self.sizes or min(self.sizes) < 1 or self.m < 1:
            raise ConfigError("sizes and m must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.warmup < 0 or self.noise < 0:
            raise ConfigError("warmup and noise must be non-negative")
        _check_names(self.estimators, set(CATALOG) - {"oracle"}, "estimator")


@dataclass
class SweepConfig:
    episodes: int = 100
    noise: tuple = ("none", "low", "medium", "high")
    estimators: tuple = ("tagk",) + BASELINES
    base_seed: int = 0
    workers: int = 1
    tune: bool = True
    tune_episodes: int = 10
    tune_noise: str = "medium"
    p0_grid: tuple = (1e-4, 1e-2, 1.0)
    traces: bool = False
    adopt_inertia: bool = False

    def __post_init__(self):
        self.noise = tuple(self.noise)
        self.estimators = tuple(self.estimators)
        self.p0_grid = tuple(float(p) for p in self.p0_grid)
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        _check_names(self.noise + (self.tune_noise,), NOISE_LEVELS, "noise level")
        _check_names(self.estimators, CATALOG, "estimator")


@dataclass
class AblationConfig:
    episodes: int = 100
    noise: str = "medium"
    variants: tuple = ("rk", "tark", "grk", "tagk")
    base_seed: int = 0
    workers: int = 1
    post_steps: int = 3

    def __post_init__(self):
        self.variants = tuple(self.variants)
        if self.episodes < 1 or self.workers < 1 or self.post_steps < 1:
            raise ConfigError("episodes, workers and post_steps must be >= 1")
        _check_names((self.noise,), NOISE_LEVELS, "noise level")
        _check_names(self.variants, CATALOG, "estimator")


@dataclass
class SubstitutionConfig:
    episodes: int = 100
    noise: str = "medium"
    baselines: tuple = BASELINES
    substitute: str = "tagk"
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.baselines = tuple(self.baselines)
        if self.episodes < 1 or self.workers < 1:
            raise ConfigError("episodes and workers must be >= 1")
        _check_names((self.noise,), NOISE_LEVELS, "noise level")
        _check_names(self.baselines + (self.substitute,), CATALOG, "estimator")


@dataclass
class EpisodeRunConfig:
    estimator: str = "tagk"
    noise: str = "none"
    seed: int = 0
    trajectory: Optional[str] = None
    substitute: Optional[str] = None
    adopt_inertia: bool = False

    def __post_init__(self):
        _check_names((self.noise,), NOISE_LEVELS, "noise level")
        _check_names((self.estimator,), CATALOG, "estimator")
        if self.substitute is not None:
            _check_names((self.substitute,), CATALOG, "estimator")


SECTIONS = {
    "bench": BenchConfig,
    "sweep": SweepConfig,
    "ablation": AblationConfig,
    "substitution": SubstitutionConfig,
    "episode": EpisodeRunConfig,
}


def build(cls, mapping=None, **overrides):
    """Instantiate ``cls`` from a mapping plus overrides, rejecting unknown keys."""
    values = dict(mapping or {})
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path):
    """Read a YAML document whose top-level keys are section names."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"{path}: unknown sections {', '.join(unknown)}")
    for name, section in doc.items():
        if section is not None and not isinstance(section, dict):
            raise ConfigError(f"{path}: section {name!r} must be a mapping")
    return {name: section or {} for name, section in doc.items()}


def to_mapping(cfg):
    """Plain-data view for metadata dumps."""
    out = {}
    for k, v in dataclasses.asdict(cfg).items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out
