"""Run one episode and print the estimate error around each payload event."""

import argparse

import numpy as np

from tagk.quadsim.episode import EpisodeConfig, metrics, position_errors, run_episode


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--estimator", default="tagk")
    ap.add_argument("--noise", default="medium")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trajectory")
    args = ap.parse_args()

    cfg = EpisodeConfig.sample(args.seed, args.noise, trajectory=args.trajectory)
    trace = run_episode(cfg, args.estimator)
    print(f"{cfg.trajectory}, payload {cfg.payload_mass_fraction:.2f} of mass, "
          f"add {cfg.add_time:.2f}s, drop {cfg.drop_time:.2f}s")
    err = position_errors(trace)
    for k in trace.estimator_rows:
        truth = trace.theta_true[k]
        rel = np.linalg.norm(trace.theta_hat[k] - truth) / np.linalg.norm(truth)
        mark = " <- payload" if trace.theta_true[k, 0] != trace.theta_true[0, 0] else ""
        print(f"t={trace.t[k]:5.2f}s  est err {rel:7.4f}  pos err {100 * err[k]:6.2f} cm{mark}")
    m = metrics(trace)
    print(f"outcome {m.outcome}, mean pos err {m.pos_err_cm:.2f} cm, t+1 est err {m.t_plus_1_est_err:.4f}")


if __name__ == "__main__":
    main()
