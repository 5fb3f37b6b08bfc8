"""Non-learning comparison policies.

Power control: iterative weighted-MMSE (sum-rate maximizing fixed point)
and greedy SNR-ordered link admission with an interference-to-noise test.
Queue control: uniform random actions and a fixed freshness-threshold
rule. The physical-layer policies never drop packets (keep flag always 1)
and recompute powers every slot from that slot's instantaneous gains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from aoisim.env import JointAction, V2VEnv

__all__ = [
    "WmmseConfig",
    "ItlinqConfig",
    "link_rates",
    "weighted_sum_rate",
    "wmmse_power",
    "itlinq_schedule",
    "random_policy",
    "threshold_policy",
    "POLICY_NAMES",
    "make_policy",
]


@dataclass(frozen=True)
class WmmseConfig:
    max_iterations: int = 100
    tolerance: float = 1e-4  # absolute change of the weighted sum rate

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class ItlinqConfig:
    eta: float = 0.7
    margin_db: float = 25.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")


def link_rates(gains: np.ndarray, powers_mw: np.ndarray,
               noise_mw: float) -> np.ndarray:
    """Per-link spectral efficiency [bit/s/Hz]; gains[i, m] couples tx i to rx m."""
    p = np.asarray(powers_mw, dtype=float)
    received = gains * p[:, None]
    signal = np.diag(received).copy()
    interference = received.sum(axis=0) - signal
    return np.log2(1.0 + signal / (noise_mw + interference))


def weighted_sum_rate(gains: np.ndarray, powers_mw: np.ndarray,
                      noise_mw: float, weights: np.ndarray | None = None) -> float:
    rates = link_rates(gains, powers_mw, noise_mw)
    if weights is None:
        return float(rates.sum())
    return float((np.asarray(weights, float) * rates).sum())


def _wmmse_run(gains: np.ndarray, noise_mw: float, p_max_mw: float,
               weights: np.ndarray, v0: np.ndarray,
               cfg: WmmseConfig) -> tuple[np.ndarray, list[float]]:
    """One monotone fixed-point run from amplitude initialization v0."""
    sqrt_direct = np.sqrt(np.diag(gains))
    v = np.clip(np.asarray(v0, dtype=float), 0.0, np.sqrt(p_max_mw))
    trace = [weighted_sum_rate(gains, v ** 2, noise_mw, weights)]
    for _ in range(cfg.max_iterations):
        total_rx = noise_mw + (v ** 2) @ gains        # per receiver, signal included
        u = sqrt_direct * v / total_rx
        w = 1.0 / (1.0 - u * sqrt_direct * v)
        denom = gains @ (weights * w * u ** 2)        # tx m's weighted footprint
        v = weights * w * u * sqrt_direct / denom
        v = np.clip(v, 0.0, np.sqrt(p_max_mw))
        trace.append(weighted_sum_rate(gains, v ** 2, noise_mw, weights))
        if abs(trace[-1] - trace[-2]) <= cfg.tolerance:
            break
    return v ** 2, trace


def wmmse_power(gains: np.ndarray, noise_mw: float, p_max_mw: float,
                cfg: WmmseConfig = WmmseConfig(),
                weights: np.ndarray | None = None,
                return_trace: bool = False):
    """Weighted sum-rate power control on a scalar interference channel.

    Runs the fixed point from a full-power start and from one near-corner
    start per link (near-symmetric channels make the symmetric fixed point
    a saddle the full-power start can stall on), then keeps the best run.
    Each individual run has a non-decreasing weighted sum rate.

    With ``return_trace`` the sum-rate iterates of the winning run are
    returned alongside the powers.
    """
    gains = np.asarray(gains, dtype=float)
    k = gains.shape[0]
    if np.any(np.diag(gains) <= 0):
        raise ValueError("direct gains must be positive")
    w = np.ones(k) if weights is None else np.asarray(weights, dtype=float)
    amp = np.sqrt(p_max_mw)
    starts = [np.full(k, amp)]
    for m in range(k):
        corner = np.full(k, 1e-3 * amp)
        corner[m] = amp
        starts.append(corner)
    best_p, best_trace = None, None
    for v0 in starts:
        p, trace = _wmmse_run(gains, noise_mw, p_max_mw, w, v0, cfg)
        if best_trace is None or trace[-1] > best_trace[-1]:
            best_p, best_trace = p, trace
    if return_trace:
        return best_p, best_trace
    return best_p


def itlinq_schedule(gains: np.ndarray, noise_mw: float, p_max_mw: float,
                    cfg: ItlinqConfig = ItlinqConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Greedy link admission in descending direct-SNR order.

    Link m joins the active set when, against every already admitted link j,
    both INR(j->m) and INR(m->j) stay below margin * SNR^eta of the victim
    link (all linear, SNR at full power). Admitted links transmit at full
    power, the rest stay silent. The strongest link is always admitted.

    Returns (active mask, power vector).
    """
    gains = np.asarray(gains, dtype=float)
    k = gains.shape[0]
    if np.any(np.diag(gains) <= 0):
        raise ValueError("direct gains must be positive")
    snr = np.diag(gains) * p_max_mw / noise_mw
    margin = 10.0 ** (cfg.margin_db / 10.0)
    admitted: list[int] = []
    for m in np.argsort(-snr):
        ok = all(
            gains[j, m] * p_max_mw / noise_mw <= margin * snr[m] ** cfg.eta
            and gains[m, j] * p_max_mw / noise_mw <= margin * snr[j] ** cfg.eta
            for j in admitted
        )
        if ok:
            admitted.append(int(m))
    active = np.zeros(k, dtype=bool)
    active[admitted] = True
    powers = np.where(active, p_max_mw, 0.0)
    return active, powers


def random_policy(rng: np.random.Generator, p_max_mw: float) -> tuple[int, float]:
    """Coin-flip keep/drop and uniform power in [0, p_max]."""
    return int(rng.integers(0, 2)), float(rng.uniform(0.0, p_max_mw))


def threshold_policy(aoi_rx: int, p_max_mw: float,
                     threshold: int = 3) -> tuple[int, float]:
    """Drop and push hard once the receiver AoI exceeds the threshold.

    Strictly above the threshold: drop the earlier batch (flag 0) and send
    at 70% of full power; otherwise keep it (flag 1) at 30%.
    """
    if aoi_rx > threshold:
        return 0, 0.7 * p_max_mw
    return 1, 0.3 * p_max_mw


POLICY_NAMES = ("wmmse", "itlinq", "random", "threshold")


def make_policy(name: str, rng: np.random.Generator | None = None,
                wmmse_cfg: WmmseConfig = WmmseConfig(),
                itlinq_cfg: ItlinqConfig = ItlinqConfig()):
    """Environment-pluggable policy closure for a named baseline.

    ``random`` needs its own ``rng``; the others are deterministic given the
    slot's channel and queue state.
    """
    if name == "wmmse":
        def policy(obs: np.ndarray, env: V2VEnv) -> JointAction:
            p = wmmse_power(env.gain_matrix(), env.config.noise_mw,
                            env.config.max_power_mw, wmmse_cfg)
            return JointAction(np.ones(env.config.num_links, dtype=int), p)
        return policy
    if name == "itlinq":
        def policy(obs: np.ndarray, env: V2VEnv) -> JointAction:
            _, p = itlinq_schedule(env.gain_matrix(), env.config.noise_mw,
                                   env.config.max_power_mw, itlinq_cfg)
            return JointAction(np.ones(env.config.num_links, dtype=int), p)
        return policy
    if name == "random":
        if rng is None:
            raise ValueError("random policy needs an rng")
        def policy(obs: np.ndarray, env: V2VEnv) -> JointAction:
            pairs = [random_policy(rng, env.config.max_power_mw)
                     for _ in range(env.config.num_links)]
            return JointAction(np.array([g for g, _ in pairs], dtype=int),
                               np.array([p for _, p in pairs]))
        return policy
    if name == "threshold":
        def policy(obs: np.ndarray, env: V2VEnv) -> JointAction:
            flags, powers = [], []
            for q in env.queues:
                g, p = threshold_policy(q.aoi_rx, env.config.max_power_mw)
                flags.append(g)
                powers.append(p)
            return JointAction(np.array(flags, dtype=int), np.array(powers))
        return policy
    raise ValueError(f"unknown baseline {name!r}; expected one of {POLICY_NAMES}")
