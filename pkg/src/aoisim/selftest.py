"""Built-in oracle suites runnable from the CLI (`aoisim selftest`).

Four suites: exhaustive queue-vs-packet-list equivalence, finite-difference
gradient checks for every trainable component, power-control quality
(iteration monotonicity plus a 2-link grid-search gap), and sampling /
distribution checks. Each suite returns (name, passed, detail).
"""

from __future__ import annotations

import time

import numpy as np

from aoisim.baselines import WmmseConfig, weighted_sum_rate, wmmse_power
from aoisim.env import OBS_DIM
from aoisim.gnn import (GraphSpec, init_sage, metric_loss_grad, sample_plan,
                        _encode_backward, _encode_tape)
from aoisim.mappo import (AgentBatch, TrainConfig, critic_loss, init_actor,
                          init_critic, ppo_actor_loss)
from aoisim.nets import categorical_entropy, gaussian_entropy, softmax
from aoisim.oracles import (PacketListQueue, finite_difference,
                            gaussian_entropy_quadrature, grid_best_sum_rate,
                            max_relative_error)
from aoisim.queueing import QueueState, slot_step
from aoisim.topology import NetworkConfig, build_channel, place_vehicles, resample_fading

__all__ = [
    "queue_equivalence_suite",
    "gradient_suite",
    "wmmse_suite",
    "distribution_suite",
    "run_selftest",
]


def queue_equivalence_suite(u: int = 3, depth: int = 6):
    """Walk every reachable state against the packet-list reference.

    Breadth-first over all (arrived, drop_flag, y in [0, 2u+1]) inputs from
    the empty buffer, de-duplicated on the projected state; every transition
    must agree exactly and respect the buffer invariants.
    """
    start = time.time()
    inputs = [(arrived, flag, y)
              for arrived in (False, True)
              for flag in (0, 1)
              for y in range(2 * u + 2)]
    root_impl = QueueState()
    root_oracle = PacketListQueue()
    frontier = {root_impl: (root_impl, root_oracle)}
    seen = {root_impl}
    transitions = 0
    mismatches = 0
    for _ in range(depth):
        nxt = {}
        for impl, oracle in frontier.values():
            for arrived, flag, y in inputs:
                new_impl, _ = slot_step(impl, arrived, flag, y, u)
                new_oracle = oracle.clone()
                new_oracle.step(arrived, flag, y, u)
                transitions += 1
                new_impl.check(u)
                if new_oracle.state() != new_impl:
                    mismatches += 1
                elif new_impl not in seen:
                    seen.add(new_impl)
                    nxt[new_impl] = (new_impl, new_oracle)
        frontier = nxt
    elapsed = time.time() - start
    detail = (f"{transitions} transitions, {len(seen)} states, "
              f"{mismatches} mismatches, {elapsed:.1f}s")
    return "queue oracle equivalence", mismatches == 0, detail


def _actor_fd_error(rng: np.random.Generator, batch_size: int = 8) -> float:
    cfg = TrainConfig(episodes=1)
    actor = init_actor(rng)
    batch = AgentBatch(
        states=rng.normal(size=(batch_size, OBS_DIM)),
        gammas=rng.integers(0, 2, size=batch_size),
        raw_actions=rng.uniform(0.1, 0.9, size=batch_size),
        old_logprobs=rng.normal(scale=0.1, size=batch_size) - 1.0,
        advantages=rng.normal(size=batch_size),
    )
    params = actor.param_dict("")
    _, grads, _ = ppo_actor_loss(actor, batch, cfg)
    numeric = finite_difference(lambda: ppo_actor_loss(actor, batch, cfg)[0], params)
    return max_relative_error(grads, numeric)


def _critic_fd_error(rng: np.random.Generator, num_agents: int = 3,
                     batch_size: int = 5) -> float:
    critic = init_critic(rng, num_agents)
    states = rng.normal(size=(batch_size, num_agents, OBS_DIM))
    returns = rng.normal(size=(batch_size, num_agents))
    params = critic.param_dict("")
    _, grads, _ = critic_loss(critic, states, returns)
    numeric = finite_difference(lambda: critic_loss(critic, states, returns)[0],
                                params)
    return max_relative_error(grads, numeric)


def _sage_fd_error(rng: np.random.Generator, num_nodes: int = 4) -> float:
    sage = init_sage(rng)
    spec = GraphSpec.for_nodes(num_nodes)
    features = rng.normal(size=(num_nodes, 5))
    mean_adv = rng.normal(size=num_nodes)
    plan = sample_plan(spec, rng)

    def loss() -> float:
        f, _ = _encode_tape(features, sage, plan)
        return metric_loss_grad(f, mean_adv)[0]

    f, tape = _encode_tape(features, sage, plan)
    _, dout = metric_loss_grad(f, mean_adv)
    dw0, dw1 = _encode_backward(sage, plan, tape, dout)
    grads = {"w0": dw0, "w1": dw1}
    numeric = finite_difference(loss, {"w0": sage.w0, "w1": sage.w1})
    return max_relative_error(grads, numeric)


def gradient_suite(tolerance: float = 1e-4):
    """Central finite differences against every trainable component."""
    rng = np.random.default_rng(321)
    errors = {
        "actor": _actor_fd_error(rng),
        "critic": _critic_fd_error(rng),
        "graph encoder": _sage_fd_error(rng),
    }
    worst = max(errors.values())
    detail = ", ".join(f"{k}={v:.2e}" for k, v in errors.items())
    return "gradient integrity", worst <= tolerance, detail


def _random_two_link_gains(rng: np.random.Generator) -> np.ndarray:
    direct = 10.0 ** rng.uniform(-8.0, -6.0, size=2)
    cross_scale = 10.0 ** rng.uniform(-3.0, 0.0, size=2)
    gains = np.empty((2, 2))
    gains[0, 0], gains[1, 1] = direct
    gains[0, 1] = direct[0] * cross_scale[0]
    gains[1, 0] = direct[1] * cross_scale[1]
    return gains


def wmmse_suite(instances: int = 50):
    """Grid-search gap and per-run sum-rate monotonicity on random 2-link channels."""
    start = time.time()
    rng = np.random.default_rng(7)
    noise = 10.0 ** (-114.0 / 10.0)
    p_max = 10.0
    cfg = WmmseConfig()
    worst_gap = 1.0
    monotone = True
    for _ in range(instances):
        gains = _random_two_link_gains(rng)
        powers, trace = wmmse_power(gains, noise, p_max, cfg, return_trace=True)
        if np.any(np.diff(trace) < -1e-9):
            monotone = False
        best, _ = grid_best_sum_rate(gains, noise, p_max, points=100)
        got = weighted_sum_rate(gains, powers, noise)
        worst_gap = min(worst_gap, got / best)
    elapsed = time.time() - start
    ok = monotone and worst_gap >= 0.98
    detail = (f"{instances} instances, worst rate ratio {worst_gap:.4f}, "
              f"monotone={monotone}, {elapsed:.1f}s")
    return "wmmse quality", ok, detail


def distribution_suite():
    """Fading moments, categorical normalization, entropy closed forms."""
    rng = np.random.default_rng(11)
    config = NetworkConfig(num_links=10, lane_offsets_m=(0.0, 4.0))
    geometry = place_vehicles(config, rng)
    chan = build_channel(geometry, config, rng)
    total = 0.0
    count = 0
    for _ in range(1000):  # 1000 redraws x 100 coefficients = 1e5 samples
        chan = resample_fading(chan, rng)
        total += float((np.abs(chan.small_scale) ** 2).sum())
        count += chan.small_scale.size
    power = total / count
    fading_ok = abs(power - 1.0) <= 0.02

    logits = rng.normal(size=(64, 2))
    sums = softmax(logits).sum(axis=1)
    categorical_ok = float(np.abs(sums - 1.0).max()) <= 1e-12

    ent_err = abs(gaussian_entropy(0.3) - gaussian_entropy_quadrature(0.3))
    uniform_err = abs(categorical_entropy(np.zeros(2)) - np.log(2.0))
    entropy_ok = ent_err <= 1e-6 and uniform_err <= 1e-12

    ok = fading_ok and categorical_ok and entropy_ok
    detail = (f"mean |h|^2 = {power:.4f} over {count} draws, categorical sum err "
              f"{float(np.abs(sums - 1.0).max()):.1e}, entropy err {ent_err:.1e}")
    return "distribution checks", ok, detail


def run_selftest(fast: bool = False, printer=print) -> bool:
    """Run all suites; prints one PASS/FAIL line each, returns overall result."""
    suites = [
        lambda: queue_equivalence_suite(depth=4 if fast else 6),
        gradient_suite,
        lambda: wmmse_suite(instances=10 if fast else 50),
        distribution_suite,
    ]
    all_ok = True
    for suite in suites:
        name, ok, detail = suite()
        printer(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        all_ok = all_ok and ok
    return all_ok
