"""Closed-loop payload-transfer sweep: one row per (estimator, noise level)."""

import argparse

import numpy as np

from tagk.estimators import BASELINES
from tagk.harness.config import SweepConfig
from tagk.harness.sweep import run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--noise", default="none,low,medium,high")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = SweepConfig(
        episodes=args.episodes,
        noise=tuple(args.noise.split(",")),
        estimators=("tagk",) + BASELINES,
        base_seed=args.seed,
        workers=args.workers,
    )
    rep = run_sweep(cfg)
    print("tuned P0:", rep.tuned)
    print(f"{'estimator':10} {'noise':7} {'mean cm':>8} {'median cm':>9} {'est err':>8} {'t+1':>7} "
          f"{'success':>8} {'aborted':>8} {'med us':>7} {'p95 us':>7}")
    for row in rep.summary:
        pos = [r.pos_err_cm for r in rep.episodes if r.estimator == row.estimator and r.noise == row.noise]
        print(
            f"{row.estimator:10} {row.noise:7} {row.pos_err_cm:8.2f} {np.nanmedian(pos):9.2f} "
            f"{row.mean_est_err:8.4f} {row.t_plus_1_est_err:7.4f} {row.success_pct:7.1f}% "
            f"{row.aborted_pct:7.1f}% {row.median_us:7.1f} {row.p95_us:7.1f}"
        )


if __name__ == "__main__":
    main()
