"""Explicit Runge-Kutta solvers for autonomous systems ``dy/dt = f(y)``.

The solver integrates segment by segment through the requested times and
lands exactly on each of them: fixed-step methods truncate the last step of
a segment, the adaptive method clamps its step so it never overshoots. No
work is done past the last requested time.

States may carry leading batch axes; ``f`` must map an array of shape
``(..., D)`` to the same shape.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .pose import TimeGrid

log = logging.getLogger(__name__)

Dynamics = Callable[[np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    pass


class MaxStepsExceeded(SolverError):
    pass


class DivergenceError(SolverError):
    pass


@dataclass(frozen=True)
class Tableau:
    a: tuple[tuple[float, ...], ...]  # strictly lower-triangular rows, row i has i entries
    b: tuple[float, ...]
    c: tuple[float, ...]
    order: int

    @property
    def stages(self) -> int:
        return len(self.b)


FIXED_TABLEAUS = {
    "euler": Tableau(a=((),), b=(1.0,), c=(0.0,), order=1),
    "midpoint": Tableau(a=((), (0.5,)), b=(0.0, 1.0), c=(0.0, 0.5), order=2),
    "rk4": Tableau(
        a=((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
        b=(1 / 6, 1 / 3, 1 / 3, 1 / 6),
        c=(0.0, 0.5, 0.5, 1.0),
        order=4,
    ),
}

# Dormand-Prince 5(4); the 5th-order solution is propagated, the last stage is
# evaluated at the new state and reused as the first stage of the next step.
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_BSTAR = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B - _DP_BSTAR

METHODS = tuple(FIXED_TABLEAUS) + ("dopri45",)


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rk4"
    fixed_step_sec: float = 0.01
    rtol: float = 1e-6
    atol: float = 1e-9
    max_steps: int = 100_000
    initial_step_sec: float = 0.01

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        for name in ("fixed_step_sec", "rtol", "atol", "initial_step_sec"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if int(self.max_steps) < 1:
            raise ValueError("max_steps must be >= 1")

    @property
    def adaptive(self) -> bool:
        return self.method == "dopri45"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "fixed_step_sec": self.fixed_step_sec,
            "rtol": self.rtol,
            "atol": self.atol,
            "max_steps": self.max_steps,
            "initial_step_sec": self.initial_step_sec,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        return cls(**{k: d[k] for k in ("method", "fixed_step_sec", "rtol", "atol", "max_steps", "initial_step_sec") if k in d})


@dataclass
class StepRecord:
    """One accepted step: its size and every stage input/derivative."""

    h: float
    stage_inputs: list[np.ndarray]
    stage_derivs: list[np.ndarray]


@dataclass
class SolveTrace:
    times: np.ndarray
    states: np.ndarray  # (N, ...) one state per query time
    segment_steps: list[int]
    n_accepted: int
    n_rejected: int
    n_evals: int
    method: str
    tape: list[StepRecord] | None = None
    output_steps: list[int] = field(default_factory=list)  # index of the step that lands on each query time


def _check_finite(y: np.ndarray, t: float):
    if not np.all(np.isfinite(y)):
        raise DivergenceError(f"non-finite state encountered at t={t:.6g} s")


def _rk_step(f: Dynamics, y: np.ndarray, h: float, tab: Tableau, record: bool):
    ks, us = [], []
    for i in range(tab.stages):
        u = y
        for j, aij in enumerate(tab.a[i]):
            if aij:
                u = u + (h * aij) * ks[j]
        us.append(u)
        ks.append(f(u))
    y_new = y
    for bi, k in zip(tab.b, ks):
        if bi:
            y_new = y_new + (h * bi) * k
    return y_new, (StepRecord(h, us, ks) if record else None)


def _step_to(t: float, target: float, h: float) -> tuple[float, bool]:
    """Step size toward ``target``; snaps to it when within rounding of a full step."""
    remaining = target - t
    if h >= remaining * (1.0 - 1e-10):
        return remaining, True
    return h, False


def solve(
    dynamics: Dynamics,
    y0: np.ndarray,
    grid: TimeGrid,
    cfg: SolverConfig = SolverConfig(),
    record_tape: bool = False,
) -> SolveTrace:
    """Integrate from t = 0 through every time in ``grid`` in one run."""
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    y = np.array(y0, dtype=np.float64)
    _check_finite(y, 0.0)
    if cfg.adaptive:
        return _solve_adaptive(dynamics, y, grid, cfg, record_tape)
    return _solve_fixed(dynamics, y, grid, cfg, record_tape)


def _solve_fixed(f, y, grid, cfg, record_tape):
    tab = FIXED_TABLEAUS[cfg.method]
    h = cfg.fixed_step_sec
    t = 0.0
    states, seg_steps, out_steps = [], [], []
    tape = [] if record_tape else None
    n_steps = 0
    for target in grid.times_sec:
        target = float(target)
        steps = 0
        while t < target:
            step, lands = _step_to(t, target, h)
            y, rec = _rk_step(f, y, step, tab, record_tape)
            t = target if lands else t + step
            n_steps += 1
            steps += 1
            if n_steps > cfg.max_steps:
                raise MaxStepsExceeded(f"exceeded max_steps={cfg.max_steps} at t={t:.6g} s")
            _check_finite(y, t)
            if record_tape:
                tape.append(rec)
        states.append(y)
        seg_steps.append(steps)
        out_steps.append(n_steps - 1)
    return SolveTrace(
        times=grid.times_sec,
        states=np.stack(states),
        segment_steps=seg_steps,
        n_accepted=n_steps,
        n_rejected=0,
        n_evals=n_steps * tab.stages,
        method=cfg.method,
        tape=tape,
        output_steps=out_steps,
    )


def _error_norm(err, y, y_new, rtol, atol) -> float:
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _solve_adaptive(f, y, grid, cfg, record_tape):
    t = 0.0
    h = cfg.initial_step_sec
    k1 = f(y)
    n_evals = 1
    n_acc = n_rej = 0
    states, seg_steps, out_steps = [], [], []
    tape = [] if record_tape else None
    for target in grid.times_sec:
        target = float(target)
        steps = 0
        while t < target:
            if n_acc + n_rej >= cfg.max_steps:
                raise MaxStepsExceeded(f"exceeded max_steps={cfg.max_steps} at t={t:.6g} s")
            step, lands = _step_to(t, target, h)
            ks, us = [k1], [y]
            for i in range(1, 7):
                u = y
                for j, aij in enumerate(_DP_A[i]):
                    if aij:
                        u = u + (step * aij) * ks[j]
                us.append(u)
                ks.append(f(u))
            n_evals += 6
            y_new = us[6]  # row 6 of A equals the 5th-order weights
            err_vec = step * sum(e * k for e, k in zip(_DP_E, ks) if e)
            err = _error_norm(err_vec, y, y_new, cfg.rtol, cfg.atol)
            if not np.isfinite(err):
                raise DivergenceError(f"non-finite state encountered at t={t:.6g} s")
            if err <= 1.0:
                factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                if record_tape:
                    tape.append(StepRecord(step, us, ks))
                t = target if lands else t + step
                y = y_new
                k1 = ks[6]
                n_acc += 1
                steps += 1
                _check_finite(y, t)
                # a clamped landing step says nothing about the sustainable step size
                h = max(step * factor, h) if lands else step * factor
            else:
                n_rej += 1
                h = step * max(0.2, 0.9 * err ** -0.2)
        states.append(y)
        seg_steps.append(steps)
        out_steps.append(n_acc - 1)
    return SolveTrace(
        times=grid.times_sec,
        states=np.stack(states),
        segment_steps=seg_steps,
        n_accepted=n_acc,
        n_rejected=n_rej,
        n_evals=n_evals,
        method="dopri45",
        tape=tape,
        output_steps=out_steps,
    )


def backward(
    trace: SolveTrace,
    dloss_dstates: np.ndarray,
    vjp: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> np.ndarray:
    """Reverse accumulation through a recorded fixed-step solve.

    ``vjp(u, cot)`` must return ``cot @ df/du`` at stage input ``u`` and may
    accumulate parameter gradients as a side effect. Stages are revisited in
    reverse order. Returns the gradient w.r.t. the initial state.
    """
    if trace.tape is None:
        raise ValueError("solve was not recorded; pass record_tape=True")
    if trace.method not in FIXED_TABLEAUS:
        raise ValueError(f"reverse accumulation needs a fixed-step tape, got {trace.method!r}")
    tab = FIXED_TABLEAUS[trace.method]
    dstates = np.asarray(dloss_dstates, dtype=np.float64)
    if dstates.shape != trace.states.shape:
        raise ValueError(f"gradient shape {dstates.shape} != states shape {trace.states.shape}")
    inject: dict[int, list[int]] = {}
    for i, s in enumerate(trace.output_steps):
        inject.setdefault(s, []).append(i)
    adj = np.zeros_like(trace.states[0])
    for n in range(len(trace.tape) - 1, -1, -1):
        for i in inject.get(n, ()):
            adj = adj + dstates[i]
        rec = trace.tape[n]
        h = rec.h
        kbar = [h * bi * adj for bi in tab.b]
        adj_prev = adj.copy()
        for i in range(tab.stages - 1, -1, -1):
            if not np.any(kbar[i]):
                continue
            ubar = vjp(rec.stage_inputs[i], kbar[i])
            adj_prev += ubar
            for j, aij in enumerate(tab.a[i]):
                if aij:
                    kbar[j] = kbar[j] + (h * aij) * ubar
        adj = adj_prev
    return adj


def make_second_order_dynamics(accel: Callable[[np.ndarray], np.ndarray], m_joints: int) -> Dynamics:
    """Coupled first-order form of ``s'' = accel(s, s')`` on states ``[s; v]``.

    ``accel`` receives the full ``6M`` state and returns ``3M`` accelerations.
    """
    n = 3 * int(m_joints)
    if n <= 0:
        raise ValueError("m_joints must be positive")

    def f(y: np.ndarray) -> np.ndarray:
        if y.shape[-1] != 2 * n:
            raise ValueError(f"second-order state width {y.shape[-1]} != {2 * n}")
        a = accel(y)
        if a.shape[-1] != n:
            raise ValueError(f"acceleration width {a.shape[-1]} != {n}")
        return np.concatenate([y[..., n:], a], axis=-1)

    return f


@dataclass(frozen=True)
class ConvergenceResult:
    error_h: float
    error_half: float
    ratio: float
    order: float


def convergence_order(
    method: str,
    dynamics: Dynamics = lambda y: -y,
    y0: float | np.ndarray = 1.0,
    t_end: float = 1.0,
    exact: Callable[[float], np.ndarray] = lambda t: np.exp(-t),
    h: float = 0.1,
) -> ConvergenceResult:
    """Empirical order from the error ratio under step halving (default problem ``y' = -y``)."""
    if method not in FIXED_TABLEAUS:
        raise ValueError(f"convergence order is measured for fixed-step methods, got {method!r}")
    grid = TimeGrid([t_end])
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    truth = np.atleast_1d(exact(t_end))
    errs = []
    for step in (h, h / 2):
        tr = solve(dynamics, y0, grid, SolverConfig(method=method, fixed_step_sec=step))
        errs.append(float(np.max(np.abs(tr.states[-1] - truth))))
    ratio = errs[0] / errs[1]
    return ConvergenceResult(errs[0], errs[1], ratio, float(np.log2(ratio)))


__all__ = [
    "SolverConfig",
    "SolveTrace",
    "StepRecord",
    "SolverError",
    "MaxStepsExceeded",
    "DivergenceError",
    "solve",
    "backward",
    "make_second_order_dynamics",
    "convergence_order",
]
