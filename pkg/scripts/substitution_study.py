"""Each baseline with and without TAG-K's first post-event estimate swapped in."""

import argparse

import numpy as np

from tagk.harness.config import SubstitutionConfig
from tagk.harness.studies import run_substitution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--noise", default="medium")
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    rep = run_substitution(SubstitutionConfig(episodes=args.episodes, noise=args.noise, workers=args.workers))
    for b, (plain, sub) in rep.medians.items():
        recs = [r for r in rep.records if r.baseline == b]
        q = [np.percentile([getattr(r, f) for r in recs], 90) for f in ("plain_pos_err_cm", "substituted_pos_err_cm")]
        ok = [sum(getattr(r, f) == "success" for r in recs) for f in ("plain_outcome", "substituted_outcome")]
        print(
            f"{b:9} median {plain:6.2f} -> {sub:6.2f} cm   p90 {q[0]:6.2f} -> {q[1]:6.2f} cm   "
            f"successes {ok[0]} -> {ok[1]} of {len(recs)}"
        )


if __name__ == "__main__":
    main()
