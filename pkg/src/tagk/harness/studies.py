"""Kaczmarz-variant ablation on shared measurement streams, and first-estimate substitution."""

import math
from dataclasses import dataclass

import numpy as np

from ..estimators import make_estimator
from ..quadsim.episode import EpisodeConfig, first_step_after, metrics, run_episode
from ..quadsim.model import crazyflie_params
from .parallel import run_tasks


@dataclass(frozen=True)
class AblationPoint:
    seed: int
    variant: str
    row: int
    t: float
    steps_after_event: int
    event: int
    rel_err: float


@dataclass(frozen=True)
class AblationSummary:
    variant: str
    episodes: int
    post_event_err: float
    final_err_mean: float
    final_err_var: float
    tagk_better_pct: float


@dataclass
class AblationReport:
    series: list
    summary: list
    post_event: dict  # variant -> per-seed mean error over the first post-event steps
    final: dict  # variant -> per-seed relative error at the last estimator step


def _align(rows, events, history_frames):
    """Estimator steps since the last event (1 = first step with a clean window), and that event's flag."""
    since = np.zeros(len(rows), dtype=np.int64)
    which = np.zeros(len(rows), dtype=np.int64)
    for flag_row, flag in events:
        i = first_step_after(rows, flag_row, history_frames)
        if i is None:
            continue
        since[i:] = np.arange(1, len(rows) - i + 1)
        which[i:] = flag
    return since, which


def _ablation_episode(task):
    seed, noise, variants, post_steps = task
    cfg = EpisodeConfig.sample(seed, noise)
    trace = run_episode(cfg, "oracle", record_blocks=True)
    rows = np.array([k for k, _ in trace.blocks], dtype=np.int64)
    events = [(int(k), int(trace.event_flag[k])) for k in trace.event_rows]
    since, which = _align(rows, events, trace.history_frames)
    theta0 = crazyflie_params().theta
    points, post, final = [], {}, {}
    for v in variants:
        est = make_estimator(v, theta0, seed=seed)
        errs = np.empty(len(rows))
        for j, (k, block) in enumerate(trace.blocks):
            est.truth = trace.theta_true[k]
            theta = est.step(block)
            truth = trace.theta_true[k]
            errs[j] = np.linalg.norm(theta - truth) / np.linalg.norm(truth)
            points.append(
                AblationPoint(seed, v, int(k), float(trace.t[k]), int(since[j]), int(which[j]), float(errs[j]))
            )
        windows = []
        for flag_row, _ in events:
            i = first_step_after(rows, flag_row, trace.history_frames)
            if i is not None:
                windows.append(errs[i : i + post_steps].mean())
        post[v] = float(np.mean(windows)) if windows else math.nan
        final[v] = float(errs[-1]) if len(errs) else math.nan
    return points, post, final


def run_ablation(cfg):
    """Replay RK/TARK/GRK/TAG-K on the blocks of one oracle-controlled episode per seed."""
    seeds = [cfg.base_seed + e for e in range(cfg.episodes)]
    tasks = [(s, cfg.noise, cfg.variants, cfg.post_steps) for s in seeds]
    results = run_tasks(_ablation_episode, tasks, cfg.workers)
    series = [p for pts, _, _ in results for p in pts]
    post = {v: np.array([r[1][v] for r in results]) for v in cfg.variants}
    final = {v: np.array([r[2][v] for r in results]) for v in cfg.variants}
    summary = []
    for v in cfg.variants:
        better = math.nan
        if "tagk" in post:
            ok = np.isfinite(post[v]) & np.isfinite(post["tagk"])
            better = 100.0 * float(np.mean(post["tagk"][ok] < post[v][ok])) if ok.any() else math.nan
        f = final[v][np.isfinite(final[v])]
        summary.append(
            AblationSummary(
                variant=v,
                episodes=len(seeds),
                post_event_err=float(np.nanmean(post[v])),
                final_err_mean=float(f.mean()) if f.size else math.nan,
                final_err_var=float(f.var()) if f.size else math.nan,
                tagk_better_pct=better,
            )
        )
    return AblationReport(series=series, summary=summary, post_event=post, final=final)


@dataclass(frozen=True)
class SubstitutionRecord:
    seed: int
    baseline: str
    plain_pos_err_cm: float
    substituted_pos_err_cm: float
    plain_outcome: str
    substituted_outcome: str


@dataclass(frozen=True)
class CdfPoint:
    baseline: str
    variant: str
    pos_err_cm: float
    cdf: float


@dataclass
class SubstitutionReport:
    records: list
    cdf: list
    medians: dict  # baseline -> (plain, substituted)


def _substitution_episode(task):
    seed, noise, baseline, substitute = task
    cfg = EpisodeConfig.sample(seed, noise)
    plain = metrics(run_episode(cfg, baseline))
    sub = metrics(run_episode(cfg, baseline, substitute_with=substitute))
    return SubstitutionRecord(seed, baseline, plain.pos_err_cm, sub.pos_err_cm, plain.outcome, sub.outcome)


def _cdf(baseline, variant, values):
    values = np.sort(np.asarray(values, dtype=np.float64))
    n = len(values)
    return [CdfPoint(baseline, variant, float(v), (i + 1) / n) for i, v in enumerate(values)]


def run_substitution(cfg):
    """Paired episodes per seed: each baseline alone and with its first post-event estimates replaced."""
    seeds = [cfg.base_seed + e for e in range(cfg.episodes)]
    tasks = [(s, cfg.noise, b, cfg.substitute) for b in cfg.baselines for s in seeds]
    records = run_tasks(_substitution_episode, tasks, cfg.workers)
    cdf, medians = [], {}
    for b in cfg.baselines:
        recs = [r for r in records if r.baseline == b]
        plain = [r.plain_pos_err_cm for r in recs]
        sub = [r.substituted_pos_err_cm for r in recs]
        cdf += _cdf(b, "plain", plain) + _cdf(b, "substituted", sub)
        medians[b] = (float(np.median(plain)), float(np.median(sub)))
    return SubstitutionReport(records=records, cdf=cdf, medians=medians)
