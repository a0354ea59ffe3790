"""Per-update latency of each estimator on synthetic blocks of growing width."""

import time
from dataclasses import dataclass

import numpy as np

from ..estimators import MeasurementBlock, make_estimator, make_rng


class ClockError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimingRecord:
    estimator: str
    n: int
    m: int
    trials: int
    mean_us: float
    median_us: float
    p95_us: float
    speedup_vs_tagk: float

    def __post_init__(self):
        if not self.p95_us >= self.median_us >= 0:
            raise ValueError("latency statistics out of order")


def gen_synthetic(n, m, rng, noise=0.0):
    """Standard-normal regressor and parameters, ``b = A theta + noise``."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    A = rng.standard_normal((m, n))
    theta = rng.standard_normal(n)
    b = A @ theta
    if noise:
        b = b + noise * rng.standard_normal(m)
    return MeasurementBlock(A, b), theta


def _clock_ns():
    t = time.perf_counter_ns()
    if t <= 0:
        raise ClockError("monotonic clock returned a non-positive reading")
    return t


def time_estimator(name, n, m, trials, warmup, seed, noise=0.0):
    """Latencies (us) of ``trials`` updates, each on a fresh block from one fixed task."""
    rng = make_rng(seed, n)
    est = make_estimator(name, np.zeros(n), seed=seed)
    for _ in range(warmup):
        block, _ = gen_synthetic(n, m, rng, noise)
        est.step(block)
    out = np.empty(trials)
    for i in range(trials):
        block, _ = gen_synthetic(n, m, rng, noise)
        t0 = _clock_ns()
        est.step(block)
        t1 = _clock_ns()
        if t1 < t0:
            raise ClockError("clock went backwards")
        out[i] = (t1 - t0) / 1e3
    return out


def time_updates(cfg):
    """One TimingRecord per (estimator, n), with the mean-latency ratio to TAG-K."""
    raw = {}
    for n in cfg.sizes:
        for name in cfg.estimators:
            raw[name, n] = time_estimator(name, n, cfg.m, cfg.trials, cfg.warmup, cfg.seed, cfg.noise)
    records = []
    for name in cfg.estimators:
        for n in cfg.sizes:
            lat = raw[name, n]
            ref = raw.get(("tagk", n))
            speedup = float(lat.mean() / ref.mean()) if ref is not None else float("nan")
            records.append(
                TimingRecord(
                    estimator=name,
                    n=n,
                    m=cfg.m,
                    trials=cfg.trials,
                    mean_us=float(lat.mean()),
                    median_us=float(np.median(lat)),
                    p95_us=float(np.percentile(lat, 95)),
                    speedup_vs_tagk=speedup,
                )
            )
    return records
