"""Small tanh multi-layer perceptron with hand-written reverse-mode gradients.

Weights are stored ``(out, in)`` so a layer computes ``x @ W.T + b``; inputs
may carry any number of leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_HIDDEN = (128, 128)


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} do not match")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(
                    f"layer {k} expects {w.shape[1]} inputs but layer {k - 1} emits {self.weights[k - 1].shape[0]}"
                )

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> list[np.ndarray]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


@dataclass
class GradBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "GradBundle":
        return cls([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def add_(self, other: "GradBundle") -> "GradBundle":
        for a, o in zip(self.arrays(), other.arrays()):
            a += o
        return self

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(a, a) for a in self.arrays())))


@dataclass
class Tape:
    """Layer inputs (post-activation of the previous layer) saved by ``forward``."""

    inputs: list[np.ndarray]


def init(layer_widths, seed: int) -> MlpParams:
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    widths = [int(w) for w in layer_widths]
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    if any(w <= 0 for w in widths):
        raise ValueError(f"layer widths must be positive, got {widths}")
    rng = np.random.default_rng(int(seed) & 0xFFFF_FFFF_FFFF_FFFF)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _check_input(params: MlpParams, x: np.ndarray):
    if x.shape[-1] != params.weights[0].shape[1]:
        raise ValueError(f"input width {x.shape[-1]} != network input width {params.weights[0].shape[1]}")


def apply(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Forward pass without recording a tape (inference path)."""
    h = x
    last = params.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if k < last:
            h = np.tanh(h)
    return h


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=np.float64)
    _check_input(params, x)
    inputs = []
    h = x
    last = params.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = h @ w.T + b
        if k < last:
            h = np.tanh(h)
    return h, Tape(inputs)


def backward(params: MlpParams, tape: Tape, dloss_dy: np.ndarray) -> GradBundle:
    """Gradients of a scalar loss w.r.t. every weight, bias and the input.

    Parameter gradients are summed over leading batch axes; the input gradient
    keeps the batch shape of the forward input.
    """
    if len(tape.inputs) != params.n_layers:
        raise ValueError("tape does not belong to this network")
    g = np.asarray(dloss_dy, dtype=np.float64)
    out_width = params.weights[-1].shape[0]
    if g.shape[-1] != out_width or g.shape[:-1] != tape.inputs[0].shape[:-1]:
        raise ValueError(f"upstream gradient shape {g.shape} does not match output {tape.inputs[0].shape[:-1] + (out_width,)}")
    dws: list[np.ndarray] = [None] * params.n_layers
    dbs: list[np.ndarray] = [None] * params.n_layers
    for k in range(params.n_layers - 1, -1, -1):
        a = tape.inputs[k]
        a2 = a.reshape(-1, a.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        dws[k] = g2.T @ a2
        dbs[k] = g2.sum(axis=0)
        g = g @ params.weights[k]
        if k > 0:
            # a = tanh(z) for every layer input except the network input
            g = g * (1.0 - a * a)
    return GradBundle(dws, dbs, g)
