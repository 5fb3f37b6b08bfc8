"""Independent reference implementations backing the self-test suite.

Each oracle recomputes a quantity through a structurally different route
than the production code: the queue oracle tracks every buffered packet
individually, gradients come from central finite differences, the sum-rate
optimum from a dense grid, the graph encoder from plain per-node loops.
"""

from __future__ import annotations

import numpy as np

from aoisim.queueing import QueueState

__all__ = [
    "PacketListQueue",
    "finite_difference",
    "max_relative_error",
    "dense_sage_reference",
    "grid_best_sum_rate",
    "gaussian_entropy_quadrature",
]


class PacketListQueue:
    """Reference buffer that stores every packet with its batch birth slot.

    The replacement/drop/FCFS rules act on the explicit packet list; queue
    lengths, batch ages, and receiver AoI are recomputed from it, never
    carried as derived state.
    """

    def __init__(self) -> None:
        self.packets: list[tuple[int, int]] = []  # (batch serial, birth slot)
        self.slot = 0
        self.aoi_rx = 0
        self._serial = 0

    def clone(self) -> "PacketListQueue":
        other = PacketListQueue()
        other.packets = list(self.packets)
        other.slot = self.slot
        other.aoi_rx = self.aoi_rx
        other._serial = self._serial
        return other

    def _batches(self) -> list[tuple[int, int, int]]:
        """Ordered (serial, birth, packet count) groups, oldest first."""
        groups: dict[int, list[int]] = {}
        for serial, birth in self.packets:
            groups.setdefault(serial, []).append(birth)
        return [(serial, births[0], len(births))
                for serial, births in sorted(groups.items())]

    def state(self) -> QueueState:
        """Project the packet list onto the compact buffer representation."""
        batches = self._batches()
        q1 = q2 = 0
        age1 = age2 = None
        if len(batches) >= 1:
            _, birth, count = batches[0]
            q1, age1 = count, self.slot - birth
        if len(batches) >= 2:
            _, birth, count = batches[1]
            q2, age2 = count, self.slot - birth
        return QueueState(q1, q2, age1, age2, self.aoi_rx)

    def step(self, arrived: bool, drop_flag: int, y: int, u: int) -> None:
        batches = self._batches()
        # arrival phase: replacement and dropping on the packet list
        if arrived:
            self._serial += 1
            fresh = [(self._serial, self.slot)] * u
            if len(batches) == 0:
                self.packets = fresh
            elif len(batches) == 1:
                if drop_flag:
                    self.packets = self.packets + fresh
                else:
                    self.packets = fresh
            else:
                first_serial = batches[0][0]
                survivors = [p for p in self.packets if p[0] == first_serial]
                if drop_flag:
                    self.packets = survivors + fresh
                else:
                    self.packets = fresh
        else:
            if len(batches) == 2 and not drop_flag:
                second_serial = batches[1][0]
                self.packets = [p for p in self.packets if p[0] == second_serial]
        # service phase: FCFS, one packet at a time
        completed_births: list[int] = []
        budget = y
        while budget > 0 and self.packets:
            serial, birth = self.packets.pop(0)
            budget -= 1
            if not any(p[0] == serial for p in self.packets):
                completed_births.append(birth)
        if completed_births:
            self.aoi_rx = (self.slot - max(completed_births)) + 1
        else:
            self.aoi_rx += 1
        self.slot += 1


def finite_difference(fn, params: dict[str, np.ndarray],
                      step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central-difference gradients of scalar ``fn()`` w.r.t. every entry.

    ``fn`` must read the live arrays in ``params``; entries are perturbed
    in place and restored.
    """
    grads: dict[str, np.ndarray] = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=float)
        it = np.nditer(arr, flags=["multi_index"], op_flags=["readwrite"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            hi = fn()
            arr[idx] = orig - step
            lo = fn()
            arr[idx] = orig
            g[idx] = (hi - lo) / (2.0 * step)
            it.iternext()
        grads[name] = g
    return grads


def max_relative_error(analytic: dict[str, np.ndarray],
                       numeric: dict[str, np.ndarray]) -> float:
    """Worst per-entry |a - n| / max(1, |a|, |n|) over all tensors."""
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def dense_sage_reference(features: np.ndarray, w0: np.ndarray, w1: np.ndarray,
                         neighbors1: list[list[int]],
                         neighbors2: list[list[int]]) -> np.ndarray:
    """Loop-based two-round mean aggregation with explicit neighbor lists."""
    feats = np.asarray(features, dtype=float)
    m, d = feats.shape
    hidden = np.zeros((m, w0.shape[0]))
    for node in range(m):
        nbrs = neighbors1[node]
        agg = np.zeros(d)
        for j in nbrs:
            agg += feats[j]
        if nbrs:
            agg /= len(nbrs)
        pre = w0 @ np.concatenate([feats[node], agg])
        hidden[node] = np.maximum(pre, 0.0)
    out = np.zeros(m)
    for node in range(m):
        nbrs = neighbors2[node]
        agg = np.zeros(hidden.shape[1])
        for j in nbrs:
            agg += hidden[j]
        if nbrs:
            agg /= len(nbrs)
        out[node] = float((w1 @ np.concatenate([hidden[node], agg]))[0])
    return out


def grid_best_sum_rate(gains: np.ndarray, noise_mw: float, p_max_mw: float,
                       points: int = 100,
                       weights: np.ndarray | None = None) -> tuple[float, tuple[float, float]]:
    """Exhaustive 2-link sum-rate search over a points x points power grid."""
    gains = np.asarray(gains, dtype=float)
    if gains.shape != (2, 2):
        raise ValueError("grid oracle handles exactly two links")
    w = np.ones(2) if weights is None else np.asarray(weights, dtype=float)
    levels = np.linspace(0.0, p_max_mw, points)
    best_rate, best_pair = -np.inf, (0.0, 0.0)
    for p0 in levels:
        sig0 = gains[0, 0] * p0
        intf_to1 = gains[0, 1] * p0
        for p1 in levels:
            sinr0 = sig0 / (noise_mw + gains[1, 0] * p1)
            sinr1 = gains[1, 1] * p1 / (noise_mw + intf_to1)
            rate = w[0] * np.log2(1.0 + sinr0) + w[1] * np.log2(1.0 + sinr1)
            if rate > best_rate:
                best_rate, best_pair = float(rate), (float(p0), float(p1))
    return best_rate, best_pair


def gaussian_entropy_quadrature(log_std: float, span: float = 12.0,
                                points: int = 200001) -> float:
    """Numerical -integral(p ln p) for N(0, exp(log_std)^2) via Simpson's rule."""
    sigma = np.exp(log_std)
    x = np.linspace(-span * sigma, span * sigma, points)
    p = np.exp(-0.5 * (x / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))
    integrand = np.where(p > 0.0, -p * np.log(np.maximum(p, 1e-300)), 0.0)
    h = x[1] - x[0]
    odd = integrand[1:-1:2].sum()
    even = integrand[2:-1:2].sum()
    return float(h / 3.0 * (integrand[0] + integrand[-1] + 4.0 * odd + 2.0 * even))
