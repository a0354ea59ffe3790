"""RK, TARK, GRK and TAG-K replayed on the same measurement windows.

Prints the mean relative parameter error per estimator step after each
payload event, plus the paired-seed summary.
"""

import argparse
from collections import defaultdict

import numpy as np

from tagk.harness.config import AblationConfig
from tagk.harness.studies import run_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--noise", default="medium")
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--steps", type=int, default=8, help="post-event steps to show")
    args = ap.parse_args()

    rep = run_ablation(AblationConfig(episodes=args.episodes, noise=args.noise, workers=args.workers))
    curves = defaultdict(list)
    for p in rep.series:
        if 1 <= p.steps_after_event <= args.steps:
            curves[p.variant, p.steps_after_event].append(p.rel_err)
    variants = [s.variant for s in rep.summary]
    print("step " + " ".join(f"{v:>8}" for v in variants))
    for k in range(1, args.steps + 1):
        print(f"{k:4d} " + " ".join(f"{np.mean(curves[v, k]):8.4f}" for v in variants))
    print()
    for s in rep.summary:
        print(
            f"{s.variant:5} post-event {s.post_event_err:.4f}  final {s.final_err_mean:.4f} "
            f"(var {s.final_err_var:.2e})  tagk better in {s.tagk_better_pct:.0f}% of seeds"
        )


if __name__ == "__main__":
    main()
