"""Per-update latency of TAG-K and the RLS/KF baselines as the parameter count grows."""

import argparse

from tagk.harness.bench import TimingRecord, time_updates
from tagk.harness.config import BenchConfig
from tagk.harness.report import write_records


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="also write the records here")
    args = ap.parse_args()

    cfg = BenchConfig(trials=args.trials, seed=args.seed)
    records = time_updates(cfg)
    by = {(r.estimator, r.n): r for r in records}
    print(f"{'n':>5} " + " ".join(f"{e:>10}" for e in cfg.estimators) + "   (mean us; speedup vs tagk)")
    for n in cfg.sizes:
        cells = [f"{by[e, n].mean_us:7.1f}/{by[e, n].speedup_vs_tagk:4.1f}x" for e in cfg.estimators]
        print(f"{n:>5} " + " ".join(f"{c:>10}" for c in cells))
    if args.csv:
        write_records(args.csv, records, TimingRecord)


if __name__ == "__main__":
    main()
