"""Command-line entry point: bench, sweep, ablate, substitute, episode.

Exit status is 0 on success, 1 on a usage or configuration error and 2 on
a runtime fault.  Outputs are staged and only moved into ``--out-dir``
once every file has been written.
"""

import argparse
import logging
import shutil
import sys
import tempfile
from pathlib import Path

from ..quadsim.episode import EpisodeConfig, metrics, run_episode, write_trace_csv
from . import config as C
from .bench import TimingRecord, time_updates
from .report import write_metadata, write_records
from .studies import AblationPoint, AblationSummary, CdfPoint, SubstitutionRecord, run_ablation, run_substitution
from .sweep import EpisodeRecord, SummaryRow, run_sweep

log = logging.getLogger("tagk")

EXIT_OK, EXIT_USAGE, EXIT_FAULT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML file with bench/sweep/ablation/substitution/episode sections")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--out-dir", type=Path, default=Path("results"), help="output directory (default: results)")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--estimators", type=_csv_list, help="comma-separated estimator names")
    common.add_argument("--noise", type=str, help="comma-separated noise levels (bench: synthetic noise std)")
    common.add_argument("--episodes", type=int, help="episodes per cell")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="python -m tagk", description="Online inertial-parameter estimation experiments.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("bench", parents=[common], help="per-update latency vs parameter count")
    sub.add_parser("sweep", parents=[common], help="closed-loop episodes over estimators and noise levels")
    sub.add_parser("ablate", parents=[common], help="Kaczmarz variants on shared measurement streams")
    sub.add_parser("substitute", parents=[common], help="replace first post-event baseline estimates")
    ep = sub.add_parser("episode", parents=[common], help="one episode with a full trace dump")
    ep.add_argument("--trajectory", type=str)
    ep.add_argument("--substitute", type=str)
    return parser


def _single(values, flag):
    if values is None:
        return None
    if len(values) != 1:
        raise C.ConfigError(f"{flag} takes a single value for this command")
    return values[0]


def _noise_list(text):
    return None if text is None else _csv_list(text)


def make_config(args, sections):
    cmd = args.command
    if cmd == "bench":
        noise = None
        if args.noise is not None:
            try:
                noise = float(args.noise)
            except ValueError:
                raise C.ConfigError("bench --noise expects a number") from None
        return C.build(C.BenchConfig, sections.get("bench"), seed=args.seed, estimators=args.estimators, noise=noise)
    if cmd == "sweep":
        return C.build(
            C.SweepConfig, sections.get("sweep"), base_seed=args.seed, workers=args.workers,
            estimators=args.estimators, noise=_noise_list(args.noise), episodes=args.episodes,
        )
    if cmd == "ablate":
        return C.build(
            C.AblationConfig, sections.get("ablation"), base_seed=args.seed, workers=args.workers,
            variants=args.estimators, noise=_single(_noise_list(args.noise), "--noise"), episodes=args.episodes,
        )
    if cmd == "substitute":
        return C.build(
            C.SubstitutionConfig, sections.get("substitution"), base_seed=args.seed, workers=args.workers,
            baselines=args.estimators, noise=_single(_noise_list(args.noise), "--noise"), episodes=args.episodes,
        )
    return C.build(
        C.EpisodeRunConfig, sections.get("episode"), seed=args.seed,
        estimator=_single(args.estimators, "--estimators"), noise=_single(_noise_list(args.noise), "--noise"),
        trajectory=args.trajectory, substitute=args.substitute,
    )


def _run(cmd, cfg, stage):
    """Write every output of ``cmd`` into ``stage``; returns a short text report."""
    if cmd == "bench":
        records = time_updates(cfg)
        write_records(stage / "bench.csv", records, TimingRecord)
        return "\n".join(
            f"{r.estimator:9s} n={r.n:4d} mean={r.mean_us:10.1f}us speedup={r.speedup_vs_tagk:6.2f}" for r in records
        )
    if cmd == "sweep":
        trace_dir = None
        if cfg.traces:
            trace_dir = stage / "traces"
            trace_dir.mkdir()
        rep = run_sweep(cfg, trace_dir)
        write_records(stage / "summary.csv", rep.summary, SummaryRow)
        write_records(stage / "episodes.csv", rep.episodes, EpisodeRecord)
        write_metadata(stage / "tuning.json", "sweep", {"p0": rep.tuned}, cfg.base_seed)
        return "\n".join(
            f"{r.estimator:9s} {r.noise:7s} pos={r.pos_err_cm:7.2f}cm t+1={r.t_plus_1_est_err:.4f} "
            f"success={r.success_pct:5.1f}% aborted={r.aborted_pct:5.1f}%"
            for r in rep.summary
        )
    if cmd == "ablate":
        rep = run_ablation(cfg)
        write_records(stage / "ablation_series.csv", rep.series, AblationPoint)
        write_records(stage / "ablation_summary.csv", rep.summary, AblationSummary)
        return "\n".join(
            f"{s.variant:5s} post-event={s.post_event_err:.4f} final var={s.final_err_var:.3e} "
            f"tagk better={s.tagk_better_pct:5.1f}%"
            for s in rep.summary
        )
    if cmd == "substitute":
        rep = run_substitution(cfg)
        write_records(stage / "substitution.csv", rep.records, SubstitutionRecord)
        write_records(stage / "substitution_cdf.csv", rep.cdf, CdfPoint)
        return "\n".join(
            f"{b:9s} median pos err plain={p:6.2f}cm substituted={s:6.2f}cm" for b, (p, s) in rep.medians.items()
        )
    ep = EpisodeConfig.sample(cfg.seed, cfg.noise, trajectory=cfg.trajectory, adopt_inertia=cfg.adopt_inertia)
    trace = run_episode(ep, cfg.estimator, substitute_with=cfg.substitute)
    write_trace_csv(trace, stage / "trace.csv")
    m = metrics(trace)
    write_metadata(stage / "episode.json", "episode", C.to_mapping(ep), cfg.seed, {"metrics": m.__dict__})
    return f"{cfg.estimator} {ep.trajectory} {m.outcome} pos={m.pos_err_cm:.2f}cm t+1={m.t_plus_1_est_err:.4f}"


def _publish(stage, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    for item in sorted(stage.iterdir()):
        target = out_dir / item.name
        if target.is_dir():
            shutil.rmtree(target)
        shutil.move(str(item), str(target))


def cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        sections = C.load_config(args.config) if args.config else {}
        cfg = make_config(args, sections)
    except (UsageError, C.ConfigError, OSError) as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out_dir = args.out_dir
    parent = out_dir.resolve().parent
    parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=parent))
    try:
        text = _run(args.command, cfg, stage)
        seed = getattr(cfg, "base_seed", getattr(cfg, "seed", None))
        write_metadata(stage / "run.json", args.command, C.to_mapping(cfg), seed)
        _publish(stage, out_dir)
    except Exception as exc:  # any fault: leave nothing behind
        log.debug("run failed", exc_info=True)
        print(f"error: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAULT
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    print(text)
    return EXIT_OK


def main():
    sys.exit(cli())
