import json
import statistics

import numpy as np
import pytest

from anypose import bench as bn
from anypose import forecaster as fc
from anypose.pose import PoseSequence


def model_22(order=1, seed=0):
    m = fc.AnyPoseModel.create(order, 22, hidden=(8,), seed=seed)
    m.set_normalization(m.input_mean, np.full(66 * order, 100.0), np.full(66, 50.0))
    return m


def obs(n=2, seed=0):
    return PoseSequence(np.random.default_rng(seed).normal(scale=100, size=(n, 22, 3)), 0.04)


def test_interpolate_endpoints_and_midpoint():
    times = np.array([0.04, 0.08, 0.12])
    poses = np.random.default_rng(0).normal(size=(3, 2, 3))
    np.testing.assert_array_equal(bn.interpolate_poses(times, poses, 0.08), poses[1])
    np.testing.assert_allclose(bn.interpolate_poses(times, poses, 0.10), (poses[1] + poses[2]) / 2, rtol=1e-12)
    np.testing.assert_array_equal(bn.interpolate_poses(times, poses, 0.01), poses[0])
    np.testing.assert_array_equal(bn.interpolate_poses(times, poses, 0.5), poses[2])


def test_dense_on_grid_point_equals_dense_prediction():
    m = model_22(seed=1)
    o = obs(1)
    r = bn.dense_interpolate_forecast(m, o, 0.32)
    full = fc.forecast(m, o, bn.dense_grid(1.0, 0.04))
    assert r.pose == full.poses[7]


def test_dense_exact_under_constant_velocity_dynamics():
    m = model_22(order=2)
    for a in m.params.arrays():
        a[...] = 0.0
    o = obs(2, seed=3)
    for t in (0.04, 0.137, 0.5, 0.99, 1.0):
        dense = bn.dense_interpolate_forecast(m, o, t).pose
        anytime = fc.forecast(m, o, [t]).poses[0]
        assert np.max(np.abs(np.asarray(dense) - np.asarray(anytime))) < 1e-9
    # before the first grid pose the baseline clamps
    assert bn.dense_interpolate_forecast(m, o, 0.013).pose == bn.dense_interpolate_forecast(m, o, 0.04).pose


def test_dense_rejects_bad_time():
    for t in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            bn.dense_interpolate_forecast(model_22(), obs(1), t)


def test_eval_counts_mechanism():
    m = model_22(seed=2)
    o = obs(1)
    c = bn.eval_counts(m, o, [1.0, 0.08, 0.3, 0.55], bn.BenchConfig())
    assert c["anytime_non_decreasing"] and c["dense_constant"]
    assert c["anytime_evals"][0] < c["anytime_evals"][-1]
    assert c["times_sec"] == [0.08, 0.3, 0.55, 1.0]


def test_default_report_has_1000_samples():
    rep = bn.run_bench(bn.BenchConfig(), model_22())
    for name in bn.STRATEGIES:
        s = rep.strategies[name]
        assert s["n"] == 1000 and len(s["samples_sec"]) == 1000
        assert s["variance"] == pytest.approx(statistics.variance(s["samples_sec"]), rel=1e-9)
        assert s["mean_sec"] == pytest.approx(statistics.fmean(s["samples_sec"]), rel=1e-12)
        assert s["min_sec"] <= s["mean_sec"] <= s["max_sec"]
    q = rep.strategies["anytime_ode"]["query_times_sec"]
    assert all(0 < t <= 1.0 for t in q)
    assert rep.environment["precision"] == "float64"
    assert "build_profile" in rep.environment
    assert rep.eval_count_checks["anytime_non_decreasing"]
    assert rep.eval_count_checks["dense_constant"]
    dense = rep.strategies["dense_interpolate"]
    assert dense["forecast_mean_sec"] + dense["interpolate_mean_sec"] <= dense["mean_sec"]


def test_queries_fixed_by_seed():
    cfg = bn.BenchConfig(n_queries=20, warmup=0, strategies=("constant_velocity",), seed=9)
    a = bn.run_bench(cfg, None, [obs(2)])
    b = bn.run_bench(cfg, None, [obs(2)])
    assert a.strategies["constant_velocity"]["query_times_sec"] == b.strategies["constant_velocity"]["query_times_sec"]


def test_report_json_and_table(tmp_path):
    rep = bn.run_bench(bn.BenchConfig(n_queries=5, warmup=1), model_22(), [obs(2)])
    rep.save(tmp_path / "b.json")
    d = json.loads((tmp_path / "b.json").read_text())
    assert set(d["strategies"]) == set(bn.STRATEGIES)
    lines = rep.table().splitlines()
    assert "Mean Time Cost" in lines[0] and "Variance" in lines[0]
    assert len(lines) == 2 + 3


def test_model_strategy_mismatch():
    with pytest.raises(ValueError, match="model"):
        bn.run_bench(bn.BenchConfig(n_queries=2), None, [obs(2)])
    with pytest.raises(ValueError, match="poses"):
        bn.run_bench(bn.BenchConfig(n_queries=2), model_22(), [obs(1)])
    with pytest.raises(ValueError, match="cap"):
        bn.run_bench(bn.BenchConfig(n_queries=2, horizon_sec=3.0), model_22(), [obs(2)])


@pytest.mark.parametrize(
    "kw", [{"n_queries": 0}, {"horizon_sec": 0.0}, {"warmup": -1}, {"strategies": ("lstm",)}, {"timer": "time"}]
)
def test_bench_config_validation(kw):
    with pytest.raises(ValueError):
        bn.BenchConfig(**kw)
