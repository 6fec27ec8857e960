"""Dense feedforward network with hand-written backpropagation and Adam.

The network is ReLU hidden layers followed by one of three output heads:
``sigmoid`` (binary cross-entropy), ``softmax`` (categorical cross-entropy)
or ``linear`` (mean squared error).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, softmax

from .data import BINARY, MULTICLASS, REGRESSION, Task
from .linalg import ShapeError

PROB_CLAMP = 1e-7

OUTPUT_FOR_TASK = {BINARY: "sigmoid", MULTICLASS: "softmax", REGRESSION: "linear"}


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple[int, ...]
    output: str = "sigmoid"
    n_outputs: int = 1
    l1: float = 0.0
    l2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("layer widths must be >= 1")
        if self.output not in ("sigmoid", "softmax", "linear"):
            raise ValueError(f"unknown output {self.output!r}")
        if self.output != "softmax" and self.n_outputs != 1:
            raise ValueError(f"{self.output} output has a single unit")
        if self.output == "softmax" and self.n_outputs < 2:
            raise ValueError("softmax output needs >= 2 units")
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("regularization strengths must be nonnegative")

    @classmethod
    def for_task(cls, task: Task, input_dim: int, hidden=(), l1=0.0, l2=0.0) -> Architecture:
        n_out = task.n_classes if task.kind == MULTICLASS else 1
        return cls(input_dim, tuple(hidden), OUTPUT_FOR_TASK[task.kind], n_out, l1, l2)

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.n_outputs]


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output: str = "sigmoid"

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> MlpParams:
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.output)

    @classmethod
    def from_arrays(cls, arrays, output: str) -> MlpParams:
        h = len(arrays) // 2
        return cls(list(arrays[:h]), list(arrays[h:]), output)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None  # d(loss)/d(network input)
    fs: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        head = [self.fs] if self.fs is not None else []
        return [*head, *self.weights, *self.biases]


def init_params(arch: Architecture, seed=0) -> MlpParams:
    """Fan-scaled uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    sizes = arch.sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, arch.output)


@dataclass
class Cache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer
    output: np.ndarray


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, Cache]:
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ShapeError(f"input shape {x.shape} does not match first layer {params.weights[0].shape}")
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
    if params.output == "sigmoid":
        out = expit(z)
    elif params.output == "softmax":
        out = softmax(z, axis=1)
    else:
        out = z
    return out, Cache(inputs, pre, out)


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    return np.eye(k)[labels.astype(np.int64)]


def loss(output: np.ndarray, y: np.ndarray, kind: str) -> float:
    """Mean loss over samples; ``kind`` is the task kind or the output head."""
    y = np.asarray(y, dtype=np.float64)
    if kind in (BINARY, "sigmoid"):
        p = np.clip(output[:, 0], PROB_CLAMP, 1.0 - PROB_CLAMP)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
    if kind in (MULTICLASS, "softmax"):
        p = output[np.arange(y.shape[0]), y.astype(np.int64)]
        return float(-np.mean(np.log(np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP))))
    if kind in (REGRESSION, "linear"):
        return float(np.mean((output[:, 0] - y) ** 2))
    raise ValueError(f"unknown loss kind {kind!r}")


def reg_penalty(params: MlpParams, l1: float, l2: float) -> float:
    if not l1 and not l2:
        return 0.0
    return float(sum(l1 * np.abs(w).sum() + l2 * (w * w).sum() for w in params.weights))


def _output_delta(params: MlpParams, cache: Cache, y: np.ndarray) -> np.ndarray:
    """d(mean loss)/d(last pre-activation), exact for the clamped losses."""
    out = cache.output
    n = out.shape[0]
    if params.output == "sigmoid":
        p = out[:, 0]
        live = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
        return (((p - y) * live) / n)[:, None]
    if params.output == "softmax":
        labels = y.astype(np.int64)
        py = out[np.arange(n), labels]
        live = (py > PROB_CLAMP) & (py < 1.0 - PROB_CLAMP)
        return (out - _one_hot(labels, out.shape[1])) * live[:, None] / n
    return (2.0 / n) * (out[:, 0] - y)[:, None]


def backward(params: MlpParams, cache: Cache, y, l1: float = 0.0, l2: float = 0.0) -> Gradients:
    """Gradient of ``loss + l1*sum|W| + l2*sum W^2`` (biases unregularized).

    Subgradients at the ReLU and absolute-value kinks are taken as zero.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != cache.output.shape[0]:
        raise ShapeError("targets and cached output disagree in length")
    delta = _output_delta(params, cache, y)
    n_layers = len(params.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        w = params.weights[i]
        g = cache.inputs[i].T @ delta
        if l1:
            g += l1 * np.sign(w)
        if l2:
            g += 2.0 * l2 * w
        gw[i] = g
        gb[i] = delta.sum(axis=0)
        delta = delta @ w.T
        if i > 0:
            delta = delta * (cache.pre[i - 1] > 0)
    return Gradients(gw, gb, inputs=delta)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected Adam update; returns new arrays, advances ``state``."""
    if len(params) != len(grads):
        raise ShapeError("parameter and gradient lists differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    out = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        out.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return out
