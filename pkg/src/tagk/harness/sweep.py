"""Closed-loop episode sweeps over estimators and noise levels."""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from ..estimators import resolve_spec
from ..quadsim.episode import NOISE_LEVELS, ABORTED, SUCCESS, EpisodeConfig, metrics, run_episode, write_trace_csv
from .parallel import run_tasks

TUNE_SEED_OFFSET = 10_000_000
NOISE_ORDER = tuple(NOISE_LEVELS)


@dataclass(frozen=True)
class EpisodeRecord:
    estimator: str
    noise: str
    seed: int
    trajectory: str
    outcome: str
    pos_err_cm: float
    mean_est_err: float
    t_plus_1_est_err: float
    t_plus_1_step_err: float
    steps: int
    median_us: float
    p95_us: float


@dataclass(frozen=True)
class SummaryRow:
    estimator: str
    noise: str
    episodes: int
    pos_err_cm: float
    mean_est_err: float
    t_plus_1_est_err: float
    success_pct: float
    aborted_pct: float
    median_us: float
    p95_us: float


@dataclass
class SweepReport:
    summary: list
    episodes: list
    tuned: dict


def episode_seed(base_seed, noise_index, episode_index, episodes):
    """Index-based schedule: cells at different noise levels never share seeds."""
    return base_seed + noise_index * episodes + episode_index


def _run_one(task):
    spec, noise, seed, adopt_inertia, trace_path = task
    cfg = EpisodeConfig.sample(seed, noise, adopt_inertia=adopt_inertia)
    trace = run_episode(cfg, spec)
    if trace_path:
        write_trace_csv(trace, trace_path)
    m = metrics(trace)
    lat = np.asarray(trace.est_times_us)
    rec = EpisodeRecord(
        estimator=spec.name,
        noise=noise,
        seed=seed,
        trajectory=cfg.trajectory,
        outcome=m.outcome,
        pos_err_cm=m.pos_err_cm,
        mean_est_err=m.mean_est_err,
        t_plus_1_est_err=m.t_plus_1_est_err,
        t_plus_1_step_err=m.t_plus_1_step_err,
        steps=m.n_estimator_steps,
        median_us=float(np.median(lat)) if lat.size else math.nan,
        p95_us=float(np.percentile(lat, 95)) if lat.size else math.nan,
    )
    return rec, lat.size


def _nanmean(values):
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    return float(values.mean()) if values.size else math.nan


def _nanmedian(values):
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    return float(np.median(values)) if values.size else math.nan


def summarize(records):
    """Aggregate episode records into one row per (estimator, noise) cell, in first-seen order.

    Latency columns are the median over episodes of each episode's median
    and p95 estimator-step time, so the summary can be rebuilt from the
    per-episode table alone.
    """
    cells = {}
    for i, rec in enumerate(records):
        cells.setdefault((rec.estimator, rec.noise), []).append(i)
    rows = []
    for (name, noise), idx in cells.items():
        recs = [records[i] for i in idx]
        k = len(recs)
        rows.append(
            SummaryRow(
                estimator=name,
                noise=noise,
                episodes=k,
                pos_err_cm=_nanmean([r.pos_err_cm for r in recs]),
                mean_est_err=_nanmean([r.mean_est_err for r in recs]),
                t_plus_1_est_err=_nanmean([r.t_plus_1_est_err for r in recs]),
                success_pct=100.0 * sum(r.outcome == SUCCESS for r in recs) / k,
                aborted_pct=100.0 * sum(r.outcome == ABORTED for r in recs) / k,
                median_us=_nanmedian([r.median_us for r in recs]),
                p95_us=_nanmedian([r.p95_us for r in recs]),
            )
        )
    return rows


def tune_baseline(name, cfg):
    """Pick the P0 magnitude with the lowest mean position error on held-out seeds."""
    spec = resolve_spec(name)
    if spec.kind not in ("rls", "kf") or not cfg.tune or len(cfg.p0_grid) < 2:
        return spec
    seeds = [cfg.base_seed + TUNE_SEED_OFFSET + e for e in range(cfg.tune_episodes)]
    candidates = [dataclasses.replace(spec, p0=p0) for p0 in cfg.p0_grid]
    tasks = [(c, cfg.tune_noise, s, cfg.adopt_inertia, None) for c in candidates for s in seeds]
    results = run_tasks(_run_one, tasks, cfg.workers)
    scores = []
    for j in range(len(candidates)):
        chunk = results[j * len(seeds) : (j + 1) * len(seeds)]
        scores.append(_nanmean([rec.pos_err_cm for rec, _ in chunk]))
    return candidates[int(np.nanargmin(scores))]


def run_sweep(cfg, trace_dir=None):
    specs = {name: tune_baseline(name, cfg) for name in cfg.estimators}
    tasks = []
    for name in cfg.estimators:
        for noise in cfg.noise:
            level = NOISE_ORDER.index(noise)
            for e in range(cfg.episodes):
                seed = episode_seed(cfg.base_seed, level, e, cfg.episodes)
                path = None
                if cfg.traces and trace_dir is not None:
                    path = str(trace_dir / f"{name}_{noise}_{seed}.csv")
                tasks.append((specs[name], noise, seed, cfg.adopt_inertia, path))
    results = run_tasks(_run_one, tasks, cfg.workers)
    records = [r for r, _ in results]
    tuned = {n: s.p0 for n, s in specs.items() if s.kind in ("rls", "kf")}
    return SweepReport(summary=summarize(records), episodes=records, tuned=tuned)
