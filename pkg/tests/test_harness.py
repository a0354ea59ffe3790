import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import tagk.estimators as est_mod
from tagk.estimators import EstimatorSpec, make_estimator
from tagk.harness import cli as cli_mod
from tagk.harness.bench import TimingRecord, gen_synthetic, time_estimator, time_updates
from tagk.harness.config import (
    AblationConfig,
    BenchConfig,
    ConfigError,
    SubstitutionConfig,
    SweepConfig,
    build,
    load_config,
)
from tagk.harness.report import read_records, write_records
from tagk.harness.studies import AblationPoint, CdfPoint, SubstitutionRecord, run_ablation, run_substitution
from tagk.harness.sweep import EpisodeRecord, SummaryRow, episode_seed, run_sweep, summarize
from tagk.quadsim.episode import SUCCESS, EpisodeConfig, run_episode


def without_timing(rec):
    return dataclasses.replace(rec, median_us=0.0, p95_us=0.0)


# --- synthetic tasks and timing -------------------------------------------------------


def test_gen_synthetic_shapes_and_seed():
    a, ta = gen_synthetic(40, 30, np.random.default_rng(1))
    b, tb = gen_synthetic(40, 30, np.random.default_rng(1))
    assert a.A.shape == (30, 40) and a.b.shape == (30,) and ta.shape == (40,)
    assert np.array_equal(a.A, b.A) and np.array_equal(ta, tb)
    with pytest.raises(ValueError):
        gen_synthetic(0, 3, np.random.default_rng(0))


def test_gen_synthetic_single_block_recovery():
    block, theta = gen_synthetic(10, 30, np.random.default_rng(2))
    est = np.linalg.lstsq(block.A, block.b, rcond=None)[0]
    assert np.linalg.norm(est - theta) <= 1e-8 * np.linalg.norm(theta)


def test_timing_record_order_checked():
    with pytest.raises(ValueError):
        TimingRecord("tagk", 40, 30, 10, 1.0, 2.0, 1.5, 1.0)
    with pytest.raises(ValueError):
        TimingRecord("tagk", 40, 30, 10, 1.0, -1.0, 1.5, 1.0)


def test_one_estimator_one_size():
    recs = time_updates(BenchConfig(sizes=(40,), trials=3, estimators=("tagk",)))
    assert len(recs) == 1
    assert recs[0].speedup_vs_tagk == 1.0
    assert recs[0].p95_us >= recs[0].median_us > 0


def test_bench_records_cover_grid():
    cfg = BenchConfig(sizes=(20, 30), trials=3, estimators=("tagk", "rls_low", "kf_high"))
    recs = time_updates(cfg)
    assert [(r.estimator, r.n) for r in recs] == [(e, n) for e in cfg.estimators for n in cfg.sizes]


def test_median_latency_grows_with_width():
    for name in ("tagk", "rls_low", "kf_low"):
        med = [np.median(time_estimator(name, n, 30, 40, 3, 0)) for n in (40, 60, 80, 100, 120)]
        assert all(b >= 0.95 * a for a, b in zip(med, med[1:])), (name, med)


def test_doubling_trials_keeps_mean():
    short = time_estimator("rls_low", 60, 30, 40, 3, 0)
    long = time_estimator("rls_low", 60, 30, 80, 3, 1)
    # timing noise is heavy tailed, so allow a generous band
    sd = long.std(ddof=1)
    assert abs(short.mean() - long.mean()) <= max(4 * sd / math.sqrt(short.size), 0.25 * long.mean())


# --- config ---------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        BenchConfig(sizes=(0,))
    with pytest.raises(ConfigError):
        BenchConfig(trials=0)
    with pytest.raises(ConfigError):
        SweepConfig(estimators=("tagk", "lms"))
    with pytest.raises(ConfigError):
        SweepConfig(noise=("loud",))
    with pytest.raises(ConfigError):
        AblationConfig(post_steps=0)
    with pytest.raises(ConfigError):
        build(SweepConfig, {"episodez": 3})
    assert build(SweepConfig, {"episodes": 3}, episodes=5).episodes == 5
    assert build(SweepConfig, {"episodes": 3}, episodes=None).episodes == 3


def test_load_config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("sweep:\n  episodes: 4\n  noise: [none, low]\nbench:\n  sizes: [40, 80]\n")
    sections = load_config(path)
    assert build(SweepConfig, sections["sweep"]).noise == ("none", "low")
    assert build(BenchConfig, sections["bench"]).sizes == (40, 80)
    path.write_text("other:\n  x: 1\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("sweep: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(path)


# --- CSV round trips ------------------------------------------------------------------------

finite = st.floats(allow_nan=False, allow_infinity=False)
maybe_nan = st.one_of(finite, st.just(math.nan))
names = st.text(st.characters(whitelist_categories=("L", "N")), min_size=1, max_size=8)


def _same(a, b):
    for f in dataclasses.fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, float) and math.isnan(x):
            assert math.isnan(y)
        else:
            assert x == y and type(x) is type(y)


@given(st.lists(st.builds(EpisodeRecord, names, names, st.integers(0, 2**40), names, names,
                          maybe_nan, maybe_nan, maybe_nan, maybe_nan, st.integers(0, 100), maybe_nan, maybe_nan),
                max_size=5))
def test_episode_records_round_trip(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("csv") / "episodes.csv"
    write_records(path, records, EpisodeRecord)
    back = read_records(path, EpisodeRecord)
    assert len(back) == len(records)
    for a, b in zip(records, back):
        _same(a, b)


@given(finite.filter(lambda x: x >= 0), finite.filter(lambda x: x >= 0))
def test_timing_records_round_trip(tmp_path_factory, a, b):
    lo, hi = sorted((a, b))
    rec = TimingRecord("tagk", 40, 30, 10, hi, lo, hi, math.nan)
    path = tmp_path_factory.mktemp("csv") / "bench.csv"
    write_records(path, [rec], TimingRecord)
    _same(rec, read_records(path, TimingRecord)[0])


def test_study_records_round_trip(tmp_path):
    samples = [
        (AblationPoint, AblationPoint(1, "tagk", 40, 0.8, 2, 1, 0.0123)),
        (SubstitutionRecord, SubstitutionRecord(3, "rls_low", 1.5, math.nan, "success", "aborted")),
        (CdfPoint, CdfPoint("kf_low", "plain", 0.1 + 0.2, 1 / 3)),
        (SummaryRow, SummaryRow("tagk", "none", 3, 1.0, 0.1, math.nan, 100.0, 0.0, 7.5, 9.25)),
    ]
    for cls, rec in samples:
        path = tmp_path / f"{cls.__name__}.csv"
        write_records(path, [rec], cls)
        _same(rec, read_records(path, cls)[0])


def test_read_records_rejects_wrong_columns(tmp_path):
    path = tmp_path / "x.csv"
    write_records(path, [CdfPoint("a", "b", 1.0, 1.0)], CdfPoint)
    with pytest.raises(ValueError):
        read_records(path, SummaryRow)


# --- sweeps ---------------------------------------------------------------------------------


def test_oracle_single_episode_succeeds():
    rep = run_sweep(SweepConfig(episodes=1, noise=("none",), estimators=("oracle",)))
    assert rep.summary[0].success_pct == 100.0
    assert rep.summary[0].episodes == 1


def test_seed_schedule_disjoint_across_noise():
    episodes = 50
    seen = set()
    for level in range(4):
        cell = {episode_seed(7, level, e, episodes) for e in range(episodes)}
        assert not cell & seen
        seen |= cell


@pytest.fixture(scope="module")
def small_sweep():
    cfg = SweepConfig(episodes=3, noise=("none", "medium"), estimators=("tagk", "rls_low"), tune_episodes=2)
    return cfg, run_sweep(cfg)


def test_sweep_filter_and_order(small_sweep):
    cfg, rep = small_sweep
    assert [(r.estimator, r.noise) for r in rep.summary] == [
        ("tagk", "none"), ("tagk", "medium"), ("rls_low", "none"), ("rls_low", "medium")
    ]
    assert {r.estimator for r in rep.episodes} == {"tagk", "rls_low"}
    assert len(rep.episodes) == 12
    assert set(rep.tuned) == {"rls_low"} and rep.tuned["rls_low"] in cfg.p0_grid


def test_summary_replays_from_episode_csv(small_sweep, tmp_path):
    _, rep = small_sweep
    path = tmp_path / "episodes.csv"
    write_records(path, rep.episodes, EpisodeRecord)
    replay = summarize(read_records(path, EpisodeRecord))
    assert len(replay) == len(rep.summary)
    for a, b in zip(rep.summary, replay):
        _same(a, b)


def test_sweep_same_results_across_worker_counts(small_sweep):
    cfg, rep = small_sweep
    par = run_sweep(dataclasses.replace(cfg, workers=3))
    assert [without_timing(r) for r in par.episodes] == [without_timing(r) for r in rep.episodes]
    assert par.tuned == rep.tuned


# --- ablation and substitution ------------------------------------------------------------------


def test_ablation_small():
    rep = run_ablation(AblationConfig(episodes=2))
    variants = [s.variant for s in rep.summary]
    assert variants == ["rk", "tark", "grk", "tagk"]
    per_variant = {v: [p for p in rep.series if p.variant == v] for v in variants}
    rows = {v: [(p.seed, p.row) for p in pts] for v, pts in per_variant.items()}
    assert all(r == rows["tagk"] for r in rows.values())
    tagk = next(s for s in rep.summary if s.variant == "tagk")
    assert math.isnan(tagk.tagk_better_pct) or tagk.tagk_better_pct == 0.0


def test_rk_equals_tark_with_full_burn_in():
    cfg = EpisodeConfig.sample(3, "medium")
    trace = run_episode(cfg, "oracle", record_blocks=True)
    theta0 = trace.theta_true[0]
    rk = make_estimator(EstimatorSpec("x", "kaczmarz", variant="RK"), theta0, seed=3, instance_id=5)
    tark = make_estimator(
        EstimatorSpec("y", "kaczmarz", variant="TARK", iterations_T=30, burn_in_tb=30), theta0, seed=3, instance_id=5
    )
    for _, block in trace.blocks:
        assert np.array_equal(rk.step(block), tark.step(block))


def test_substitution_once_per_event(monkeypatch):
    calls = []
    original = est_mod.OnlineEstimator.substitute

    def counting(self, theta):
        calls.append(self.name)
        original(self, theta)

    monkeypatch.setattr(est_mod.OnlineEstimator, "substitute", counting)
    cfg = EpisodeConfig.sample(1, "low")
    trace = run_episode(cfg, "kf_low", substitute_with="tagk")
    assert trace.completed
    assert calls == ["kf_low", "kf_low"]


def test_substitution_small():
    rep = run_substitution(SubstitutionConfig(episodes=2, baselines=("rls_low",)))
    assert len(rep.records) == 2 and set(rep.medians) == {"rls_low"}
    assert [p.cdf for p in rep.cdf if p.variant == "plain"] == [0.5, 1.0]


# --- command line -----------------------------------------------------------------------------


def run_cli(argv, capsys):
    code = cli_mod.cli(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_unknown_flag(tmp_path, capsys):
    code, _, err = run_cli(["sweep", "--bogus", "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 1 and "usage:" in err
    assert not (tmp_path / "o").exists()


def test_cli_missing_config(tmp_path, capsys):
    out = tmp_path / "o"
    code, _, err = run_cli(["sweep", "--config", str(tmp_path / "none.yaml"), "--out-dir", str(out)], capsys)
    assert code == 1 and "usage:" in err
    assert not out.exists()
    assert not list(tmp_path.glob(".staging-*"))


def test_cli_malformed_config(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("sweep:\n  episodes: [\n")
    code, _, _ = run_cli(["sweep", "--config", str(cfg), "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 1


def test_cli_no_command(capsys):
    code, _, err = run_cli([], capsys)
    assert code == 1 and "usage:" in err


def test_cli_runtime_fault_leaves_nothing(tmp_path, capsys, monkeypatch):
    def failing(cmd, cfg, stage):
        (stage / "partial.csv").write_text("x\n")
        raise RuntimeError("boom")

    monkeypatch.setattr(cli_mod, "_run", failing)
    out = tmp_path / "o"
    code, _, err = run_cli(["episode", "--out-dir", str(out)], capsys)
    assert code == 2 and "boom" in err
    assert not out.exists()
    assert not list(tmp_path.glob(".staging-*"))


def test_cli_episode_outputs(tmp_path, capsys):
    out = tmp_path / "ep"
    code, text, _ = run_cli(
        ["episode", "--seed", "4", "--estimators", "tagk", "--noise", "low", "--trajectory", "Circle", "--out-dir", str(out)],
        capsys,
    )
    assert code == 0 and "Circle" in text
    assert sorted(p.name for p in out.iterdir()) == ["episode.json", "run.json", "trace.csv"]
    meta = json.loads((out / "episode.json").read_text())
    assert meta["seed"] == 4 and meta["config"]["trajectory"] == "Circle"
    first = (out / "trace.csv").read_bytes()
    run_cli(["episode", "--seed", "4", "--estimators", "tagk", "--noise", "low", "--trajectory", "Circle", "--out-dir", str(out)], capsys)
    assert (out / "trace.csv").read_bytes() == first


def test_cli_sweep_filter(tmp_path, capsys):
    out = tmp_path / "sw"
    cfg = tmp_path / "c.yaml"
    cfg.write_text("sweep:\n  tune_episodes: 1\n  episodes: 5\n")
    code, _, _ = run_cli(
        ["sweep", "--config", str(cfg), "--estimators", "tagk,rls_low", "--noise", "none", "--episodes", "1",
         "--out-dir", str(out)],
        capsys,
    )
    assert code == 0
    rows = read_records(out / "summary.csv", SummaryRow)
    assert [r.estimator for r in rows] == ["tagk", "rls_low"]
    assert len(read_records(out / "episodes.csv", EpisodeRecord)) == 2
    assert json.loads((out / "run.json").read_text())["config"]["episodes"] == 1


def test_cli_bench_columns(tmp_path, capsys):
    out = tmp_path / "b"
    cfg = tmp_path / "c.yaml"
    cfg.write_text("bench:\n  sizes: [20]\n  trials: 2\n")
    code, _, _ = run_cli(["bench", "--config", str(cfg), "--estimators", "tagk,rls_low", "--out-dir", str(out)], capsys)
    assert code == 0
    header = (out / "bench.csv").read_text().splitlines()[0]
    assert header == "estimator,n,m,trials,mean_us,median_us,p95_us,speedup_vs_tagk"


def test_cli_bad_estimator_name(tmp_path, capsys):
    code, _, err = run_cli(["sweep", "--estimators", "tagk,lms", "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 1 and "lms" in err
