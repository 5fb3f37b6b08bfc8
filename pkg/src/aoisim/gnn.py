"""Interference-topology encoder for the link graph.

Every link is a node of a fully connected directed graph (any other
transmitter can interfere). Two rounds of sampled mean-aggregation
compress the five raw node descriptors into one scalar per link; a
kernel-matching loss supervised by per-agent advantage levels tunes the
two weight matrices once per episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from aoisim.topology import LinkGeometry, NetworkConfig, path_loss_db

__all__ = [
    "FEATURE_DIM",
    "HIDDEN_DIM",
    "GraphSpec",
    "SageParams",
    "sample_size",
    "init_sage",
    "node_features",
    "standardize_features",
    "sample_plan",
    "encode",
    "metric_loss",
    "metric_loss_grad",
    "update",
]

FEATURE_DIM = 5
HIDDEN_DIM = 16


def sample_size(num_nodes: int) -> int:
    """Neighbor-sample budget for a graph of the given size.

    For tiny graphs the formula can exceed the number of available
    neighbors (it returns 2 even for one or two nodes); samplers clamp
    to the neighbors that actually exist.
    """
    return max(2, min(num_nodes - 1, int(2.0 * math.sqrt(num_nodes))))


@dataclass(frozen=True)
class GraphSpec:
    """Node count and per-node sample budget of the interference graph."""

    num_nodes: int
    sample_size: int

    @classmethod
    def for_nodes(cls, num_nodes: int) -> "GraphSpec":
        return cls(num_nodes=num_nodes, sample_size=sample_size(num_nodes))


@dataclass
class SageParams:
    """Two aggregation layers: hidden rectifier, then a scalar linear output."""

    w0: np.ndarray  # (hidden, 2 * FEATURE_DIM)
    w1: np.ndarray  # (1, 2 * hidden)

    def param_dict(self, prefix: str = "sage.") -> dict[str, np.ndarray]:
        return {prefix + "w0": self.w0, prefix + "w1": self.w1}


def init_sage(rng: np.random.Generator, hidden_dim: int = HIDDEN_DIM,
              feature_dim: int = FEATURE_DIM) -> SageParams:
    b0 = 1.0 / math.sqrt(2 * feature_dim)
    b1 = 1.0 / math.sqrt(2 * hidden_dim)
    return SageParams(
        w0=rng.uniform(-b0, b0, size=(hidden_dim, 2 * feature_dim)),
        w1=rng.uniform(-b1, b1, size=(1, 2 * hidden_dim)),
    )


def node_features(geometry: LinkGeometry, config: NetworkConfig) -> np.ndarray:
    """Raw per-link descriptors: direct path loss [dB] plus endpoint coordinates [m]."""
    pl = np.asarray(path_loss_db(geometry.pair_distances(), config))
    return np.column_stack([pl, geometry.tx[:, 0], geometry.tx[:, 1],
                            geometry.rx[:, 0], geometry.rx[:, 1]])


def standardize_features(raw: np.ndarray) -> np.ndarray:
    """Zero mean / unit variance per column; constant columns map to zero.

    dB and meter columns differ by orders of magnitude, so the encoder
    always consumes standardized features.
    """
    raw = np.asarray(raw, dtype=float)
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    out = np.zeros_like(raw)
    keep = std > 1e-12
    out[:, keep] = (raw[:, keep] - mean[keep]) / std[keep]
    return out


def _neighbor_matrix(num_nodes: int, k: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Row-stochastic sampling matrix: row m averages k sampled neighbors of m.

    Sampling is without replacement; when k covers every neighbor the full
    neighborhood is used and no randomness is consumed.
    """
    mat = np.zeros((num_nodes, num_nodes))
    if num_nodes <= 1 or k <= 0:
        return mat
    all_nodes = np.arange(num_nodes)
    for m in range(num_nodes):
        others = np.delete(all_nodes, m)
        chosen = others if k >= num_nodes - 1 else rng.choice(others, size=k,
                                                              replace=False)
        mat[m, chosen] = 1.0 / len(chosen)
    return mat


def sample_plan(spec: GraphSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """One independent neighbor sample per aggregation layer."""
    k = min(spec.sample_size, spec.num_nodes - 1)
    return [_neighbor_matrix(spec.num_nodes, k, rng) for _ in range(2)]


def _encode_tape(features: np.ndarray, params: SageParams,
                 plan: list[np.ndarray]):
    h0 = np.asarray(features, dtype=float)
    c1 = np.concatenate([h0, plan[0] @ h0], axis=1)
    z1 = c1 @ params.w0.T
    h1 = np.maximum(z1, 0.0)
    c2 = np.concatenate([h1, plan[1] @ h1], axis=1)
    f = (c2 @ params.w1.T)[:, 0]
    return f, (c1, z1, h1, c2)


def _encode_backward(params: SageParams, plan: list[np.ndarray], tape,
                     dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c1, z1, h1, c2 = tape
    df = np.asarray(dout, dtype=float)[:, None]  # (M, 1)
    dw1 = df.T @ c2
    dc2 = df @ params.w1
    hidden = h1.shape[1]
    dh1 = dc2[:, :hidden] + plan[1].T @ dc2[:, hidden:]
    dz1 = dh1 * (z1 > 0.0)
    dw0 = dz1.T @ c1
    return dw0, dw1


def encode(features: np.ndarray, params: SageParams, spec: GraphSpec,
           rng: np.random.Generator, plan: list[np.ndarray] | None = None) -> np.ndarray:
    """Scalar embedding per link from two rounds of sampled mean aggregation.

    An isolated node aggregates a zero vector in place of the neighbor mean.
    With a sample budget covering all neighbors the result is deterministic.
    """
    if plan is None:
        plan = sample_plan(spec, rng)
    f, _ = _encode_tape(features, params, plan)
    return f


def metric_loss(embeddings: np.ndarray, mean_advantages: np.ndarray,
                tau1: float = 1.0, tau2: float = 1.0) -> float:
    """Mean squared gap between the embedding kernel and the advantage kernel.

    Averaged over all ordered pairs of distinct links; zero for fewer than
    two links by convention.
    """
    loss, _ = metric_loss_grad(embeddings, mean_advantages, tau1, tau2)
    return loss


def metric_loss_grad(embeddings: np.ndarray, mean_advantages: np.ndarray,
                     tau1: float = 1.0, tau2: float = 1.0) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to the embeddings."""
    if tau1 <= 0 or tau2 <= 0:
        raise ValueError("temperatures must be positive")
    f = np.asarray(embeddings, dtype=float)
    a = np.asarray(mean_advantages, dtype=float)
    m = len(f)
    if m < 2:
        return 0.0, np.zeros(m)
    diff = f[:, None] - f[None, :]
    k_emb = np.exp(-(diff ** 2) / tau1)
    k_adv = np.exp(-np.abs(a[:, None] - a[None, :]) / tau2)
    off = ~np.eye(m, dtype=bool)
    resid = k_emb - k_adv
    count = m * (m - 1)
    loss = float((resid[off] ** 2).sum() / count)
    pair = 2.0 * resid * k_emb * (-2.0 * diff / tau1) / count
    pair[np.eye(m, dtype=bool)] = 0.0
    grad = pair.sum(axis=1) - pair.sum(axis=0)
    return loss, grad


def update(params: SageParams, features: np.ndarray, spec: GraphSpec,
           mean_advantages: np.ndarray, tau1: float, tau2: float,
           learning_rate: float, rng: np.random.Generator) -> tuple[SageParams, float]:
    """One descent step on the kernel-matching loss.

    The neighbor sample is drawn once and held fixed through the
    differentiation. Returns the updated parameters and the loss at the
    pre-update point.
    """
    plan = sample_plan(spec, rng)
    f, tape = _encode_tape(features, params, plan)
    loss, dout = metric_loss_grad(f, mean_advantages, tau1, tau2)
    dw0, dw1 = _encode_backward(params, plan, tape, dout)
    new_params = SageParams(w0=params.w0 - learning_rate * dw0,
                            w1=params.w1 - learning_rate * dw1)
    return new_params, loss
