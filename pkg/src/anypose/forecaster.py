"""First- and second-order neural ODE pose forecasters.

Order 1 integrates ``ds/dt = MLP(s)`` from the last observed pose. Order 2
integrates ``d2s/dt2 = MLP(s, v)`` as the coupled system on ``[s; v]``, with
the initial velocity taken from the last two observed poses.

The network sees standardized inputs and its outputs are rescaled to
physical units (mm/s or mm/s^2); the affine maps are fixed per model and
stored alongside the weights.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import mlp
from ._io import atomic_write_text
from .mlp import GradBundle, MlpParams
from .ode import SolverConfig, SolveTrace, make_second_order_dynamics, solve
from .pose import DEFAULT_FRAME_INTERVAL_SEC, Pose, PoseSequence, TimeGrid, canonicalize, flatten

DEFAULT_HORIZON_CAP_SEC = 2.0
INFERENCE_SOLVER = SolverConfig(method="dopri45", rtol=1e-4, atol=1e-3, initial_step_sec=0.05, max_steps=10_000)
TRAINING_SOLVER = SolverConfig(method="rk4", fixed_step_sec=0.01)


class CheckpointError(ValueError):
    pass


@dataclass
class AnyPoseModel:
    order: int
    params: MlpParams
    m_joints: int
    frame_interval_sec: float = DEFAULT_FRAME_INTERVAL_SEC
    inference_solver: SolverConfig = INFERENCE_SOLVER
    seed: int = 0
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None
    output_scale: np.ndarray | None = None
    horizon_cap_sec: float = DEFAULT_HORIZON_CAP_SEC

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")
        if self.m_joints < 1:
            raise ValueError("m_joints must be >= 1")
        n = 3 * self.m_joints
        widths = self.params.widths
        if widths[0] != n * self.order or widths[-1] != n:
            raise ValueError(
                f"order-{self.order} model with M={self.m_joints} needs widths {n * self.order}->...->{n}, got {widths}"
            )
        if not self.frame_interval_sec > 0:
            raise ValueError("frame_interval_sec must be positive")
        d_in = n * self.order
        self.input_mean = np.zeros(d_in) if self.input_mean is None else np.asarray(self.input_mean, dtype=np.float64)
        self.input_scale = np.ones(d_in) if self.input_scale is None else np.asarray(self.input_scale, dtype=np.float64)
        self.output_scale = np.ones(n) if self.output_scale is None else np.asarray(self.output_scale, dtype=np.float64)
        if self.input_mean.shape != (d_in,) or self.input_scale.shape != (d_in,) or self.output_scale.shape != (n,):
            raise ValueError("normalization vectors do not match model widths")
        if np.any(self.input_scale <= 0) or np.any(self.output_scale <= 0):
            raise ValueError("normalization scales must be positive")

    @classmethod
    def create(
        cls,
        order: int,
        m_joints: int,
        hidden: Sequence[int] = mlp.DEFAULT_HIDDEN,
        seed: int = 0,
        **kwargs,
    ) -> "AnyPoseModel":
        n = 3 * m_joints
        params = mlp.init([n * order, *hidden, n], seed)
        return cls(order=order, params=params, m_joints=m_joints, seed=seed, **kwargs)

    @property
    def state_width(self) -> int:
        return 3 * self.m_joints * self.order

    @property
    def history(self) -> int:
        """Observed poses needed to form the initial state."""
        return self.order

    def set_normalization(self, input_mean, input_scale, output_scale) -> None:
        self.input_mean = np.asarray(input_mean, dtype=np.float64)
        self.input_scale = np.asarray(input_scale, dtype=np.float64)
        self.output_scale = np.asarray(output_scale, dtype=np.float64)
        self.__post_init__()

    def network_output(self, y: np.ndarray) -> np.ndarray:
        """Velocity (order 1) or acceleration (order 2) in physical units."""
        return self.output_scale * mlp.apply(self.params, (y - self.input_mean) / self.input_scale)

    def dynamics(self):
        if self.order == 1:
            return self.network_output
        return make_second_order_dynamics(self.network_output, self.m_joints)

    def dynamics_vjp(self, grads: GradBundle):
        """Vector-Jacobian product of ``dynamics`` that accumulates into ``grads``."""
        n = 3 * self.m_joints
        inv = 1.0 / self.input_scale

        def net_vjp(u, cot_out):
            _, tape = mlp.forward(self.params, (u - self.input_mean) * inv)
            g = mlp.backward(self.params, tape, cot_out * self.output_scale)
            grads.add_(g)
            return g.inputs * inv

        if self.order == 1:
            return net_vjp

        def vjp(u, cot):
            du = net_vjp(u, cot[..., n:])
            du[..., n:] += cot[..., :n]
            return du

        return vjp


@dataclass
class InitialState:
    s0: Pose
    v0: np.ndarray | None = None  # (M, 3) mm/s, order 2 only

    def state_vector(self) -> np.ndarray:
        s = flatten(self.s0)
        if self.v0 is None:
            return s
        return np.concatenate([s, np.asarray(self.v0, dtype=np.float64).reshape(-1)])


def initial_velocity(s_prev: Pose | np.ndarray, s0: Pose | np.ndarray, dt_sec: float) -> np.ndarray:
    """Backward difference ``(s0 - s_prev) / dt`` per joint coordinate."""
    if not (np.isfinite(dt_sec) and dt_sec > 0):
        raise ValueError(f"dt_sec must be positive, got {dt_sec}")
    a = np.asarray(s_prev, dtype=np.float64)
    b = np.asarray(s0, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"pose shapes differ: {a.shape} vs {b.shape}")
    return (b - a) / dt_sec


def build_initial_state(model: AnyPoseModel, observed: PoseSequence) -> InitialState:
    if observed.m_joints != model.m_joints:
        raise ValueError(f"observed sequence has M={observed.m_joints}, model expects {model.m_joints}")
    if len(observed) < model.history:
        raise ValueError(f"order-{model.order} model needs {model.history} observed poses, got {len(observed)}")
    s0 = observed[-1]
    if model.order == 1:
        return InitialState(s0)
    # the data's own spacing, not the model's training spacing
    v0 = initial_velocity(observed.poses[-2], observed.poses[-1], observed.frame_interval_sec)
    return InitialState(s0, v0)


def initial_state_batch(model: AnyPoseModel, histories: np.ndarray, dt_sec: float) -> np.ndarray:
    """Initial state vectors ``(B, D)`` from observed histories ``(B, H, M, 3)``."""
    h = np.asarray(histories, dtype=np.float64)
    b = h.shape[0]
    s0 = h[:, -1].reshape(b, -1)
    if model.order == 1:
        return s0
    return np.concatenate([s0, initial_velocity(h[:, -2], h[:, -1], dt_sec).reshape(b, -1)], axis=1)


@dataclass
class Forecast:
    poses: list[Pose]
    times_sec: np.ndarray  # in caller order
    trace: SolveTrace = field(repr=False)


def check_horizon(model: AnyPoseModel, grid: TimeGrid) -> None:
    if grid.last > model.horizon_cap_sec:
        raise ValueError(f"query time {grid.last} s exceeds horizon cap {model.horizon_cap_sec} s")


def forecast(
    model: AnyPoseModel,
    observed: PoseSequence,
    times: TimeGrid | Sequence[float] | np.ndarray,
    solver: SolverConfig | None = None,
    record_tape: bool = False,
) -> Forecast:
    """Poses at every requested time from one solver run.

    Times may be given in any order (duplicates allowed); results follow the
    caller's order.
    """
    grid, inv = canonicalize(times)
    check_horizon(model, grid)
    y0 = build_initial_state(model, observed).state_vector()
    trace = solve(model.dynamics(), y0, grid, solver or model.inference_solver, record_tape)
    n = 3 * model.m_joints
    poses = [Pose(trace.states[i, :n].reshape(-1, 3)) for i in inv]
    return Forecast(poses, grid.times_sec[inv], trace)


def forecast_batch(
    model: AnyPoseModel,
    y0: np.ndarray,
    grid: TimeGrid,
    solver: SolverConfig | None = None,
    record_tape: bool = False,
) -> SolveTrace:
    """Solve from a batch of initial states ``(B, D)``; states come back as ``(N, B, D)``."""
    check_horizon(model, grid)
    return solve(model.dynamics(), y0, grid, solver or model.inference_solver, record_tape)


class ModelPredictor:
    """Adapts a model to the evaluation predictor interface.

    With an adaptive solver each window is solved on its own, exactly as a
    single forecast would be; fixed-step solvers run the whole batch at once.
    """

    def __init__(self, model: AnyPoseModel, solver: SolverConfig | None = None):
        self.model = model
        self.solver = solver or model.inference_solver
        self.history = model.history

    def predict(self, windows, grid: TimeGrid) -> np.ndarray:
        m = self.model
        y0 = initial_state_batch(m, windows.histories, windows.frame_interval_sec)
        n = 3 * m.m_joints
        if self.solver.adaptive:
            states = np.stack([forecast_batch(m, y, grid, self.solver).states for y in y0], axis=1)
        else:
            states = forecast_batch(m, y0, grid, self.solver).states
        return states[..., :n].reshape(len(grid), len(y0), m.m_joints, 3)


# -- checkpoints --------------------------------------------------------------


def model_to_dict(model: AnyPoseModel) -> dict:
    return {
        "order": model.order,
        "m_joints": model.m_joints,
        "widths": model.params.widths,
        "weights": [w.reshape(-1).tolist() for w in model.params.weights],
        "biases": [b.tolist() for b in model.params.biases],
        "seed": int(model.seed),
        "frame_interval_sec": model.frame_interval_sec,
        "normalization": {
            "input_mean": model.input_mean.tolist(),
            "input_scale": model.input_scale.tolist(),
            "output_scale": model.output_scale.tolist(),
        },
        "inference_solver": model.inference_solver.to_dict(),
        "horizon_cap_sec": model.horizon_cap_sec,
    }


def model_from_dict(d: dict) -> AnyPoseModel:
    try:
        order = int(d["order"])
        if order not in (1, 2):
            raise CheckpointError(f"order must be 1 or 2, got {order}")
        m = int(d["m_joints"])
        widths = [int(w) for w in d["widths"]]
        if len(d["weights"]) != len(widths) - 1 or len(d["biases"]) != len(widths) - 1:
            raise CheckpointError("weights/biases count does not match widths")
        weights, biases = [], []
        for k, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
            w = np.asarray(d["weights"][k], dtype=np.float64)
            b = np.asarray(d["biases"][k], dtype=np.float64)
            if w.size != fi * fo or b.size != fo:
                raise CheckpointError(f"layer {k}: expected {fo}x{fi} weights and {fo} biases")
            weights.append(w.reshape(fo, fi))
            biases.append(b.reshape(fo))
        norm = d.get("normalization") or {}
        solver = SolverConfig.from_dict(d["inference_solver"]) if "inference_solver" in d else INFERENCE_SOLVER
        return AnyPoseModel(
            order=order,
            params=MlpParams(weights, biases),
            m_joints=m,
            frame_interval_sec=float(d["frame_interval_sec"]),
            inference_solver=solver,
            seed=int(d.get("seed", 0)),
            input_mean=norm.get("input_mean"),
            input_scale=norm.get("input_scale"),
            output_scale=norm.get("output_scale"),
            horizon_cap_sec=float(d.get("horizon_cap_sec", DEFAULT_HORIZON_CAP_SEC)),
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"invalid checkpoint: {e}") from e


def dumps(model: AnyPoseModel) -> str:
    return json.dumps(model_to_dict(model), allow_nan=False) + "\n"


def save(model: AnyPoseModel, path: str | os.PathLike) -> None:
    atomic_write_text(path, dumps(model))


def load(path: str | os.PathLike) -> AnyPoseModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e.strerror}") from e
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed checkpoint {path}: {e}") from e
    if not isinstance(d, dict):
        raise CheckpointError(f"malformed checkpoint {path}: top level is not an object")
    return model_from_dict(d)
