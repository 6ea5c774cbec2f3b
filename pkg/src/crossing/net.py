"""Minimal feedforward Q-network with hand-written forward/backward passes.

Layers are plain (out x in) weight matrices plus bias vectors; hidden layers
use the rectifier, the output layer is linear with one value per action.
The loss for a single update is the squared error on the selected action's
output only, so the gradient flows through exactly one output row.

Checkpoint layout (little-endian): magic ``QNET``, uint32 version (1),
uint32 layer count L, uint32 dims[L+1], then for each layer the weight
matrix row-major as float64 followed by the bias vector as float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"QNET"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden: tuple[int, ...] = (32, 32)
    output_dim: int = 3

    def __post_init__(self) -> None:
        if self.input_dim <= 0 or self.output_dim <= 0 or any(h <= 0 for h in self.hidden):
            raise ValueError("all layer dimensions must be positive")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    def param_count(self) -> int:
        dims = self.dims
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


@dataclass
class Network:
    spec: NetworkSpec
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)


@dataclass
class GradientBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_network(spec: NetworkSpec, rng: np.random.Generator) -> Network:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    dims = spec.dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return Network(spec=spec, weights=weights, biases=biases)


def _forward_trace(net: Network, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Returns (pre-activations per layer, inputs per layer incl. x)."""
    inputs = [x]
    zs = []
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        zs.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        inputs.append(a)
    return zs, inputs


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.spec.input_dim,):
        raise ValueError(
            f"input must have shape ({net.spec.input_dim},), got {x.shape}"
        )
    _, inputs = _forward_trace(net, x)
    return inputs[-1]


def backward(
    net: Network,
    x: np.ndarray,
    action_index: int,
    target: float,
) -> tuple[float, GradientBundle]:
    """Loss and parameter gradients for (q[action] - target)^2."""
    if not np.isfinite(target):
        raise ValueError("target must be finite")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.spec.input_dim,):
        raise ValueError(
            f"input must have shape ({net.spec.input_dim},), got {x.shape}"
        )
    if not 0 <= action_index < net.spec.output_dim:
        raise ValueError("action index out of range")
    zs, inputs = _forward_trace(net, x)
    q = inputs[-1]
    diff = q[action_index] - target
    loss = diff * diff

    grad_w = [np.zeros_like(w) for w in net.weights]
    grad_b = [np.zeros_like(b) for b in net.biases]
    # Output layer: gradient only through the selected action's row.
    delta_out = np.zeros(net.spec.output_dim, dtype=np.float64)
    delta_out[action_index] = 2.0 * diff
    delta = delta_out
    for layer in range(len(net.weights) - 1, -1, -1):
        grad_w[layer] = np.outer(delta, inputs[layer])
        grad_b[layer] = delta
        if layer > 0:
            delta = (net.weights[layer].T @ delta) * (zs[layer - 1] > 0.0)
    return float(loss), GradientBundle(weights=grad_w, biases=grad_b)


def sgd_step(net: Network, grads: GradientBundle, lr: float) -> Network:
    """In-place params <- params - lr * grads; returns the same network."""
    if lr < 0:
        raise ValueError("lr must be nonnegative")
    for w, gw in zip(net.weights, grads.weights):
        if w.shape != gw.shape:
            raise ValueError("gradient shape mismatch")
        w -= lr * gw
    for b, gb in zip(net.biases, grads.biases):
        if b.shape != gb.shape:
            raise ValueError("gradient shape mismatch")
        b -= lr * gb
    return net


def save_checkpoint(net: Network, path: str | Path) -> None:
    dims = net.spec.dims
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<I", len(net.weights)),
        struct.pack(f"<{len(dims)}I", *dims),
    ]
    for w, b in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> Network:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a network checkpoint file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (n_layers,) = struct.unpack_from("<I", raw, 8)
    dims = struct.unpack_from(f"<{n_layers + 1}I", raw, 12)
    offset = 12 + 4 * (n_layers + 1)
    spec = NetworkSpec(input_dim=dims[0], hidden=tuple(dims[1:-1]), output_dim=dims[-1])
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        n = fan_out * fan_in
        w = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(fan_out, fan_in)
        offset += 8 * n
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    return Network(spec=spec, weights=weights, biases=biases)
