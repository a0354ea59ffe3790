"""Benchmarks, episode sweeps, ablation and substitution studies."""

from .bench import TimingRecord, gen_synthetic, time_updates
from .config import AblationConfig, BenchConfig, ConfigError, SubstitutionConfig, SweepConfig, load_config
from .studies import run_ablation, run_substitution
from .sweep import run_sweep
