"""Latency of single anytime queries versus predict-a-dense-grid-then-interpolate.

The anytime strategy integrates only up to the queried time. The dense
strategy always forecasts the full fixed grid (as a discrete-step forecaster
would) and linearly interpolates each joint coordinate at the queried time.
"""

from __future__ import annotations

import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ._io import atomic_write_text
from .forecaster import AnyPoseModel, forecast, load
from .motion import DEFAULT_N_SEQUENCES, MotionFamily, generate_dataset
from .pose import DEFAULT_M_JOINTS, Pose, PoseSequence, TimeGrid

STRATEGIES = ("anytime_ode", "dense_interpolate", "constant_velocity")


@dataclass
class BenchConfig:
    n_queries: int = 1000
    horizon_sec: float = 1.0
    warmup: int = 50
    timer: str = "perf_counter_ns"
    model_path: str | None = None
    strategies: tuple[str, ...] = STRATEGIES
    dense_step_sec: float = 0.04
    seed: int = 0

    def __post_init__(self):
        self.strategies = tuple(self.strategies)
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")
        if not self.horizon_sec > 0:
            raise ValueError("horizon_sec must be > 0")
        if not self.dense_step_sec > 0:
            raise ValueError("dense_step_sec must be > 0")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies {sorted(unknown)}")
        if self.timer not in ("perf_counter_ns", "monotonic_ns"):
            raise ValueError(f"unknown timer {self.timer!r}")


def dense_grid(horizon_sec: float, step_sec: float) -> TimeGrid:
    k = max(1, int(round(horizon_sec / step_sec)))
    return TimeGrid(np.arange(1, k + 1) * step_sec)


def interpolate_poses(grid_times: np.ndarray, poses: np.ndarray, t: float) -> np.ndarray:
    """Joint-wise linear interpolation of ``poses`` (K, M, 3); clamps outside the grid."""
    if t <= grid_times[0]:
        return poses[0].copy()
    if t >= grid_times[-1]:
        return poses[-1].copy()
    i = int(np.searchsorted(grid_times, t, side="right"))
    t0, t1 = grid_times[i - 1], grid_times[i]
    w = (t - t0) / (t1 - t0)
    return poses[i - 1] + w * (poses[i] - poses[i - 1])


@dataclass
class DenseResult:
    pose: Pose
    n_evals: int
    forecast_sec: float
    interpolate_sec: float


def dense_interpolate_forecast(
    model: AnyPoseModel,
    observed: PoseSequence,
    t_sec: float,
    grid_step_sec: float = 0.04,
    horizon_sec: float = 1.0,
) -> DenseResult:
    """Forecast the whole dense grid regardless of ``t_sec``, then interpolate."""
    if not (0 < t_sec <= horizon_sec * (1 + 1e-12)):
        raise ValueError(f"query time must lie in (0, {horizon_sec}], got {t_sec}")
    grid = dense_grid(horizon_sec, grid_step_sec)
    c0 = time.perf_counter_ns()
    fc = forecast(model, observed, grid)
    c1 = time.perf_counter_ns()
    n = 3 * model.m_joints
    poses = fc.trace.states[:, :n].reshape(len(grid), model.m_joints, 3)
    pose = interpolate_poses(grid.times_sec, poses, t_sec)
    c2 = time.perf_counter_ns()
    return DenseResult(Pose(pose), fc.trace.n_evals, (c1 - c0) * 1e-9, (c2 - c1) * 1e-9)


def constant_velocity_forecast(observed: PoseSequence, t_sec: float) -> Pose:
    if len(observed) < 2:
        raise ValueError("constant-velocity extrapolation needs two observed poses")
    p = observed.poses
    return Pose(p[-1] + t_sec * (p[-1] - p[-2]) / observed.frame_interval_sec)


def _stats(samples: list[float]) -> dict:
    a = np.asarray(samples)
    return {
        "n": int(a.size),
        "mean_sec": float(a.mean()),
        "variance": float(a.var(ddof=1)) if a.size > 1 else 0.0,
        "min_sec": float(a.min()),
        "max_sec": float(a.max()),
    }


def environment() -> dict:
    return {
        "python": sys.version.split()[0],
        "implementation": platform.python_implementation(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor(),
        "build_profile": "python/numpy reference (interpreted)",
        "precision": "float64",
        "threads_in_timed_region": 1,
    }


@dataclass
class BenchReport:
    strategies: dict = field(default_factory=dict)
    eval_count_checks: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=1) + "\n")

    def table(self) -> str:
        lines = [f"{'strategy':<18} | {'Mean Time Cost':>16} | {'Variance':>10} | {'mean evals':>10}", "-" * 64]
        for name, s in self.strategies.items():
            lines.append(
                f"{name:<18} | {s['mean_sec']:>12.3e} sec | {s['variance']:>10.1e} | {s['mean_evals']:>10.1f}"
            )
        return "\n".join(lines)


def eval_counts(model: AnyPoseModel, observed: PoseSequence, times, cfg: BenchConfig) -> dict:
    """Dynamics-evaluation counts per query time on one fixed input, for both ODE strategies."""
    times = np.sort(np.asarray(times))
    anytime = [forecast(model, observed, [t]).trace.n_evals for t in times]
    dense = [dense_interpolate_forecast(model, observed, t, cfg.dense_step_sec, cfg.horizon_sec).n_evals for t in times]
    return {
        "times_sec": times.tolist(),
        "anytime_evals": anytime,
        "dense_evals": dense,
        "anytime_non_decreasing": bool(np.all(np.diff(anytime) >= 0)),
        "dense_constant": len(set(dense)) == 1,
    }


def default_observed_pool(m_joints: int, history: int, seed: int, n_sequences: int = DEFAULT_N_SEQUENCES) -> list[PoseSequence]:
    """One observed window from the middle of each test sequence of a synthetic dataset."""
    split = generate_dataset(MotionFamily(m_joints=m_joints), n_sequences, seed)
    return [s.window(len(s) // 2, history) for s in split.test]


def run_bench(
    cfg: BenchConfig,
    model: AnyPoseModel | None = None,
    observed_pool: list[PoseSequence] | None = None,
) -> BenchReport:
    """Time ``n_queries`` single-time queries per strategy.

    Query times are uniform in ``(0, horizon]``; each query uses an observed
    window drawn from ``observed_pool``. Timed regions run single-threaded.
    The model defaults to ``cfg.model_path`` and the pool to synthetic test windows.
    """
    if model is None and cfg.model_path is not None:
        model = load(cfg.model_path)
    if observed_pool is None:
        observed_pool = default_observed_pool(model.m_joints if model else DEFAULT_M_JOINTS, 2, cfg.seed)
    if not observed_pool:
        raise ValueError("need at least one observed window")
    needs_model = {"anytime_ode", "dense_interpolate"} & set(cfg.strategies)
    if needs_model and model is None:
        raise ValueError(f"strategies {sorted(needs_model)} need a model")
    need_hist = max([model.history if model else 1] + [2 if "constant_velocity" in cfg.strategies else 1])
    if any(len(o) < need_hist for o in observed_pool):
        raise ValueError(f"observed windows need {need_hist} poses for the selected strategies")
    if model is not None and cfg.horizon_sec > model.horizon_cap_sec:
        raise ValueError(f"horizon {cfg.horizon_sec} s exceeds the model's cap {model.horizon_cap_sec} s")
    clock = getattr(time, cfg.timer)
    rng = np.random.default_rng(cfg.seed)
    times = cfg.horizon_sec * (1.0 - rng.random(cfg.n_queries))  # (0, horizon]
    which = rng.integers(0, len(observed_pool), cfg.n_queries)

    def run_one(name, obs, t):
        if name == "anytime_ode":
            f = forecast(model, obs, [t])
            return f.trace.n_evals, None
        if name == "dense_interpolate":
            r = dense_interpolate_forecast(model, obs, t, cfg.dense_step_sec, cfg.horizon_sec)
            return r.n_evals, (r.forecast_sec, r.interpolate_sec)
        constant_velocity_forecast(obs, t)
        return 0, None

    report = BenchReport(environment=environment(), config=asdict(cfg))
    with threadpool_limits(limits=1):
        for name in cfg.strategies:
            for k in range(cfg.warmup):
                run_one(name, observed_pool[k % len(observed_pool)], times[k % len(times)])
            samples, evals, parts = [], [], []
            for t, w in zip(times, which):
                c0 = clock()
                n_ev, part = run_one(name, observed_pool[w], float(t))
                samples.append((clock() - c0) * 1e-9)
                evals.append(n_ev)
                if part:
                    parts.append(part)
            s = _stats(samples)
            s["mean_evals"] = float(np.mean(evals))
            s["samples_sec"] = samples
            s["query_times_sec"] = times.tolist()
            s["evals"] = evals
            if parts:
                p = np.asarray(parts)
                s["forecast_mean_sec"] = float(p[:, 0].mean())
                s["interpolate_mean_sec"] = float(p[:, 1].mean())
            report.strategies[name] = s
    if model is not None and needs_model:
        probe = np.linspace(cfg.horizon_sec / 50, cfg.horizon_sec, 50)
        report.eval_count_checks = eval_counts(model, observed_pool[0], probe, cfg)
    return report
