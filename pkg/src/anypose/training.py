"""MPJPE training through unrolled fixed-step solves.

Gradients are exact for the computed trajectory: every recorded RK stage is
revisited in reverse and differentiated through the dynamics network.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import forecaster as fc
from . import ode
from ._io import atomic_write_text
from .forecaster import AnyPoseModel
from .mlp import GradBundle, MlpParams
from .motion import DatasetSplit, Windows, make_windows
from .ode import SolverConfig, SolveTrace
from .pose import TABLE_GRID_SEC, TimeGrid

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, report: "TrainReport"):
        super().__init__(msg)
        self.report = report


# -- loss ---------------------------------------------------------------------


def _as_pose_array(poses) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        a = poses.astype(np.float64, copy=False)
    else:
        a = np.stack([np.asarray(p, dtype=np.float64) for p in poses]) if len(poses) else np.empty((0, 0, 3))
    if a.ndim == 2:
        a = a[None]
    return a


def _check_pair(pred, gt):
    p, g = _as_pose_array(pred), _as_pose_array(gt)
    if p.shape[0] == 0 or g.shape[0] == 0:
        raise ValueError("empty pose lists")
    if p.shape[0] != g.shape[0]:
        raise ValueError(f"{p.shape[0]} predicted poses vs {g.shape[0]} ground-truth poses")
    if p.shape != g.shape:
        raise ValueError(f"joint count mismatch: {p.shape} vs {g.shape}")
    return p, g


def mpjpe(pred, gt) -> float:
    """Mean over poses of the mean per-joint Euclidean distance (mm)."""
    p, g = _check_pair(pred, gt)
    return float(np.linalg.norm(p - g, axis=-1).mean())


def mpjpe_grad(pred, gt) -> np.ndarray:
    """Gradient of :func:`mpjpe` w.r.t. ``pred``; joints with zero error get 0."""
    p, g = _check_pair(pred, gt)
    d = p - g
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    scale = p.shape[0] * p.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(norm > 0, d / (scale * norm), 0.0)
    return out


# -- gradients through the solver ---------------------------------------------


def backward_through_solve(model: AnyPoseModel, trace: SolveTrace, dloss_dstates: np.ndarray) -> GradBundle:
    """Parameter gradients of a loss on the solver's output states.

    ``trace`` must come from a fixed-step solve with ``record_tape=True``.
    The returned bundle's ``inputs`` holds the gradient w.r.t. the initial state.
    """
    if trace.method not in ode.FIXED_TABLEAUS:
        raise ValueError(f"training needs a fixed-step tape; got {trace.method!r}")
    grads = GradBundle.zeros_like(model.params)
    grads.inputs = ode.backward(trace, dloss_dstates, model.dynamics_vjp(grads))
    return grads


# -- optimizer ----------------------------------------------------------------


def clip_grad_norm(grads: GradBundle, max_norm: float) -> float:
    """Rescale in place so the global norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = grads.global_norm()
    if norm > max_norm:
        s = max_norm / norm
        for a in grads.arrays():
            a *= s
    return norm


class Adam:
    def __init__(self, params: MlpParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]

    def step(self, grads: GradBundle) -> None:
        # an all-zero gradient carries no information; do not let momentum move the weights
        if not any(np.any(g) for g in grads.arrays()):
            return
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for p, g, m, v in zip(self.params.arrays(), grads.arrays(), self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- normalization ------------------------------------------------------------


def fit_normalization(model: AnyPoseModel, seqs, floor: float = 1.0) -> None:
    """Per-coordinate standardization of network inputs and output scaling.

    Statistics come from finite differences of the training frames: poses and
    velocities for the inputs, velocities (order 1) or accelerations (order 2)
    for the outputs. Scales are floored at ``floor`` (mm, mm/s, mm/s^2).
    """
    pos, vel, acc = [], [], []
    for s in seqs:
        x = s.poses.reshape(len(s), -1)
        dt = s.frame_interval_sec
        pos.append(x)
        if len(s) >= 2:
            vel.append(np.diff(x, axis=0) / dt)
        if len(s) >= 3:
            acc.append(np.diff(x, n=2, axis=0) / dt**2)
    pos = np.concatenate(pos)
    vel = np.concatenate(vel) if vel else np.zeros((1, pos.shape[1]))
    if model.order == 1:
        inp, out = pos, vel
    else:
        # pair each velocity with the pose it ends on
        inp = np.concatenate([np.concatenate([s.poses.reshape(len(s), -1)[1:] for s in seqs if len(s) >= 2]), vel], axis=1)
        out = np.concatenate(acc) if acc else np.zeros((1, pos.shape[1]))
    model.set_normalization(inp.mean(axis=0), np.maximum(inp.std(axis=0), floor), np.maximum(out.std(axis=0), floor))


# -- training loop ------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    solver: SolverConfig = field(default_factory=lambda: fc.TRAINING_SOLVER)
    loss_time_grid: tuple[float, ...] = TABLE_GRID_SEC
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 500
    clip_norm: float = 1.0
    window_stride: int = 10

    def __post_init__(self):
        if isinstance(self.solver, dict):
            self.solver = SolverConfig.from_dict(self.solver)
        self.loss_time_grid = tuple(float(t) for t in self.loss_time_grid)
        TimeGrid(self.loss_time_grid)  # must already be canonical
        if self.solver.adaptive:
            raise ValueError("training requires a fixed-step solver")
        for name in ("epochs", "batch_size", "patience", "window_stride"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be finite and >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0 and self.clip_norm > 0):
            raise ValueError("invalid optimizer hyperparameters")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = self.solver.to_dict()
        d["loss_time_grid"] = list(self.loss_time_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class TrainReport:
    seed: int
    train_mpjpe: list[float] = field(default_factory=list)
    val_mpjpe: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mpjpe: float = math.inf
    best_checkpoint: str | None = None
    stopped_early: bool = False
    config: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = False) -> dict:
        """JSON-ready dict; wall-clock times are left out unless asked for so reruns compare byte-for-byte."""
        d = {
            "seed": self.seed,
            "epochs": [
                {"epoch": i + 1, "train_mpjpe": tr, "val_mpjpe": va}
                for i, (tr, va) in enumerate(zip(self.train_mpjpe, self.val_mpjpe))
            ],
            "best_epoch": self.best_epoch,
            "best_val_mpjpe": self.best_val_mpjpe,
            "best_checkpoint": self.best_checkpoint,
            "stopped_early": self.stopped_early,
            "config": self.config,
        }
        if include_timing:
            d["epoch_seconds"] = self.epoch_seconds
        return d

    def save(self, path, include_timing: bool = False) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(include_timing), indent=1, allow_nan=False) + "\n")


def _pose_half(model: AnyPoseModel, states: np.ndarray) -> np.ndarray:
    n = 3 * model.m_joints
    return states[..., :n].reshape(states.shape[:-1] + (model.m_joints, 3))


def batch_loss_and_grad(model: AnyPoseModel, w: Windows, grid: TimeGrid, solver: SolverConfig):
    """MPJPE over every (window, horizon) pair and its parameter gradient."""
    y0 = fc.initial_state_batch(model, w.histories, w.frame_interval_sec)
    trace = fc.forecast_batch(model, y0, grid, solver, record_tape=True)
    pred = _pose_half(model, trace.states)  # (N, B, M, 3)
    flat_pred = pred.reshape((-1,) + pred.shape[2:])
    flat_gt = w.targets.reshape(flat_pred.shape)
    loss = mpjpe(flat_pred, flat_gt)
    g = mpjpe_grad(flat_pred, flat_gt).reshape(pred.shape[:2] + (-1,))
    dstates = np.zeros_like(trace.states)
    dstates[..., : g.shape[-1]] = g
    return loss, backward_through_solve(model, trace, dstates)


def windows_loss(model: AnyPoseModel, w: Windows, grid: TimeGrid, solver: SolverConfig) -> float:
    y0 = fc.initial_state_batch(model, w.histories, w.frame_interval_sec)
    pred = _pose_half(model, fc.forecast_batch(model, y0, grid, solver).states)
    return mpjpe(pred.reshape((-1,) + pred.shape[2:]), w.targets.reshape((-1,) + pred.shape[2:]))


def train(
    model: AnyPoseModel,
    dataset: DatasetSplit,
    cfg: TrainConfig = TrainConfig(),
    checkpoint_path: str | Path | None = None,
) -> TrainReport:
    """Minimize MPJPE on the training split; the best-validation weights are kept.

    The model's normalization must already be fitted (see :func:`fit_normalization`).
    On return ``model.params`` holds the best-validation weights, which are also
    written to ``checkpoint_path`` when given.
    """
    if dataset.m_joints != model.m_joints:
        raise ValueError(f"dataset has M={dataset.m_joints}, model expects {model.m_joints}")
    grid = TimeGrid(cfg.loss_time_grid)
    train_w = make_windows(dataset.train, grid, model.history, cfg.window_stride)
    val_seqs = dataset.validation or dataset.train
    val_w = make_windows(val_seqs, grid, model.history, cfg.window_stride)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    report = TrainReport(seed=cfg.seed, config=cfg.to_dict())
    best = model.params.copy()
    log.info("training order-%d model on %d windows (%d validation)", model.order, len(train_w), len(val_w))

    def finish(diverged_msg: str | None = None):
        model.params = best
        if checkpoint_path is not None and report.best_epoch > 0:
            fc.save(model, checkpoint_path)
            report.best_checkpoint = Path(checkpoint_path).name
        if diverged_msg:
            raise TrainingDiverged(diverged_msg, report)
        return report

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_w))
        total = 0.0
        try:
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                loss, grads = batch_loss_and_grad(model, train_w.take(idx), grid, cfg.solver)
                if not math.isfinite(loss):
                    raise ode.DivergenceError(f"loss became {loss}")
                total += loss * len(idx)
                clip_grad_norm(grads, cfg.clip_norm)
                opt.step(grads)
            val = windows_loss(model, val_w, grid, cfg.solver)
        except ode.SolverError as e:
            return finish(f"training diverged in epoch {epoch}: {e}")
        if not math.isfinite(val):
            return finish(f"validation loss became {val} in epoch {epoch}")
        report.train_mpjpe.append(total / len(order))
        report.val_mpjpe.append(val)
        report.epoch_seconds.append(time.perf_counter() - t0)
        if val < report.best_val_mpjpe:
            report.best_val_mpjpe = val
            report.best_epoch = epoch
            best = model.params.copy()
        if epoch == 1 or epoch % 50 == 0:
            log.info("epoch %d train %.3f val %.3f mm", epoch, report.train_mpjpe[-1], val)
        if epoch - report.best_epoch >= cfg.patience:
            report.stopped_early = True
            break
    return finish()
