"""Dense nets with explicit reverse-mode gradients, Adam, distribution math, tensor I/O.

Everything runs in float64. Networks are stacks of ``DenseLayer``;
``forward_tape`` records what ``backward`` needs for exact gradients.
Parameters and gradients travel as flat ``{name: array}`` dicts so the
optimizer and the serializer stay agnostic of network structure; the dict
values are views onto the live parameter arrays, so the optimizer updates
in place.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DenseLayer",
    "DenseNet",
    "dense_net",
    "forward",
    "forward_tape",
    "backward",
    "prefix_dict",
    "AdamState",
    "adam_init",
    "adam_step",
    "global_norm",
    "clip_gradients",
    "sigmoid",
    "softmax",
    "log_softmax",
    "categorical_logprob",
    "categorical_entropy",
    "gaussian_logprob",
    "gaussian_entropy",
    "FORMAT_VERSION",
    "save_tensors",
    "load_tensors",
]

LOG_TWO_PI = math.log(2.0 * math.pi)

_ACTIVATIONS = ("relu", "tanh", "identity")


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    activation: str = "identity"

    def __post_init__(self) -> None:
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class DenseNet:
    layers: list[DenseLayer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def param_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for k, layer in enumerate(self.layers):
            out[f"{prefix}l{k}.weight"] = layer.weight
            out[f"{prefix}l{k}.bias"] = layer.bias
        return out


def dense_net(sizes: list[int], activations: list[str],
              rng: np.random.Generator) -> DenseNet:
    """Stack of affine+activation layers; weights uniform +-1/sqrt(fan_in), zero bias."""
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(sizes, sizes[1:], activations):
        bound = 1.0 / math.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(DenseLayer(weight, np.zeros(fan_out), act))
    return DenseNet(layers)


@dataclass
class Tape:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]
    squeeze: bool


def forward(net: DenseNet, x) -> np.ndarray:
    return forward_tape(net, x)[0]


def forward_tape(net: DenseNet, x) -> tuple[np.ndarray, Tape]:
    arr = np.asarray(x, dtype=float)
    squeeze = arr.ndim == 1
    h = arr[None, :] if squeeze else arr
    if h.shape[-1] != net.input_dim:
        raise ValueError(f"input dim {h.shape[-1]} != {net.input_dim}")
    inputs, pres, posts = [], [], []
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        a = _activate(layer.activation, z)
        pres.append(z)
        posts.append(a)
        h = a
    return (h[0] if squeeze else h), Tape(inputs, pres, posts, squeeze)


def backward(net: DenseNet, tape: Tape,
             grad_out) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact gradients of sum(grad_out * output) w.r.t. parameters and input."""
    g = np.asarray(grad_out, dtype=float)
    if tape.squeeze:
        g = g[None, :]
    grads: dict[str, np.ndarray] = {}
    for k in reversed(range(len(net.layers))):
        layer = net.layers[k]
        dz = g * _activate_grad(layer.activation, tape.pre[k], tape.post[k])
        grads[f"l{k}.weight"] = dz.T @ tape.inputs[k]
        grads[f"l{k}.bias"] = dz.sum(axis=0)
        g = dz @ layer.weight
    return grads, (g[0] if tape.squeeze else g)


def prefix_dict(prefix: str, d: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {prefix + k: v for k, v in d.items()}


# ---------------------------------------------------------------------------
# Adaptive-moment optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_init(params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> tuple[AdamState, dict[str, np.ndarray]]:
    """One bias-corrected update; mutates ``params`` (and moments) in place."""
    state.count += 1
    c1 = 1.0 - state.beta1 ** state.count
    c2 = 1.0 - state.beta2 ** state.count
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=float)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state, params


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale the whole gradient dict so its global norm is at most max_norm."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


# ---------------------------------------------------------------------------
# Distribution heads
# ---------------------------------------------------------------------------

def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


def categorical_logprob(index, logits):
    """Log-probability of ``index`` under softmax(logits); batched on axis 0."""
    lp = log_softmax(logits)
    if lp.ndim == 1:
        return float(lp[int(index)])
    idx = np.asarray(index, dtype=int)[..., None]
    return np.take_along_axis(lp, idx, axis=-1)[..., 0]


def categorical_entropy(logits):
    lp = log_softmax(logits)
    ent = -(np.exp(lp) * lp).sum(axis=-1)
    return float(ent) if np.ndim(ent) == 0 else ent


def gaussian_logprob(x, mean, log_std):
    """Log-density of N(mean, exp(log_std)^2) at x; broadcasts elementwise."""
    z = (np.asarray(x, dtype=float) - mean) * np.exp(-log_std)
    out = -0.5 * z * z - log_std - 0.5 * LOG_TWO_PI
    return float(out) if np.ndim(out) == 0 else out


def gaussian_entropy(log_std):
    out = np.asarray(log_std, dtype=float) + 0.5 * (LOG_TWO_PI + 1.0)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Named-tensor serialization (shared with the trainer's checkpoint format)
# ---------------------------------------------------------------------------

_MAGIC = b"DNT1"
FORMAT_VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray],
                 header: dict | None = None) -> None:
    """Write named float64 tensors (little-endian) behind a versioned JSON header."""
    head = json.dumps(header or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            data = np.ascontiguousarray(arr, dtype="<f8")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.tobytes(order="C"))


def load_tensors(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Inverse of :func:`save_tensors`; validates magic and format version."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a tensor file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        (head_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(head_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            size = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * size)
            tensors[name] = np.frombuffer(buf, dtype="<f8").astype(float).reshape(shape)
        return header, tensors
