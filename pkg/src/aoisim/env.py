"""Slot-level orchestration across all links: arrivals, hybrid actions, service, rewards.

One episode = one large-scale channel realization over ``episode_slots``
slots. Agents observe the pre-arrival buffer state and act before the
slot's arrival is revealed; the per-link reward is the negated post-step
receiver AoI, so minimizing summed AoI and maximizing return coincide.

The environment consumes its random stream in a fixed order (geometry,
initial fading, then per slot: arrivals, fading) independent of the
policy, which makes paired policy comparisons on shared seeds exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from aoisim.gnn import node_features, standardize_features
from aoisim.queueing import ArrivalProcess, QueueState, SlotEvents, slot_step
from aoisim.topology import (ChannelRealization, LinkGeometry, NetworkConfig,
                             build_channel, capacity_all, packets_transmittable,
                             place_vehicles, resample_fading)

__all__ = [
    "OBS_DIM",
    "OBS_EMBEDDING", "OBS_FADING", "OBS_Q1", "OBS_AGE1", "OBS_Q2", "OBS_AGE2", "OBS_AOI",
    "JointAction",
    "SlotRecord",
    "EpisodeResult",
    "V2VEnv",
]

OBS_DIM = 7
OBS_EMBEDDING, OBS_FADING, OBS_Q1, OBS_AGE1, OBS_Q2, OBS_AGE2, OBS_AOI = range(OBS_DIM)

# Policy callback: (observations (M, 7), env) -> JointAction
Policy = Callable[[np.ndarray, "V2VEnv"], "JointAction"]


@dataclass(frozen=True)
class JointAction:
    """Per-link keep/drop flags (1 keeps the earlier batch) and powers in mW."""

    drop_flags: np.ndarray
    powers_mw: np.ndarray


@dataclass(frozen=True)
class SlotRecord:
    """What one link saw and did in one slot."""

    state: np.ndarray      # the (7,) observation the agent acted on
    gamma: int
    power_mw: float
    reward: float          # -(post-step receiver AoI in slots)
    capacity_bps: float
    packets_sent: int
    arrived: bool
    events: SlotEvents


@dataclass
class EpisodeResult:
    """Aggregates and per-slot traces of one finished episode."""

    mean_aoi_slots: float
    mean_aoi_per_link: np.ndarray  # (M,)
    mean_reward: float
    total_return: float            # sum of rewards over links and slots
    drops: int
    packets_sent: int
    throughput_bps: float          # delivered payload bits per second of episode
    aoi_trace: np.ndarray          # (N, M) post-step receiver AoI in slots
    gamma_trace: np.ndarray        # (N, M)
    power_trace: np.ndarray        # (N, M) mW
    arrival_trace: np.ndarray      # (N, M) bool
    reward_trace: np.ndarray       # (N, M)
    capacity_trace: np.ndarray     # (N, M) bits/s
    packets_trace: np.ndarray      # (N, M)
    drops_trace: np.ndarray        # (N, M)


class V2VEnv:
    """M interfering links sharing one band, run slot by slot.

    ``embedder`` maps the standardized per-link node features to the scalar
    embeddings placed in the observations; it is invoked exactly once per
    reset and must own any randomness it needs (the environment's stream is
    reserved for geometry, arrivals, and fading). ``None`` yields zero
    embeddings.
    """

    def __init__(self, config: NetworkConfig, arrival: ArrivalProcess,
                 embedder: Optional[Callable[[np.ndarray], np.ndarray]] = None):
        self.config = config
        self.arrival = arrival
        self.embedder = embedder
        self.rng: np.random.Generator | None = None
        self.geometry: LinkGeometry | None = None
        self.channel: ChannelRealization | None = None
        self.queues: list[QueueState] = []
        self.embeddings = np.zeros(config.num_links)
        self.features_std = np.zeros((config.num_links, 5))
        self.slot = 0
        self._last_obs: np.ndarray | None = None

    # ------------------------------------------------------------------
    # Episode lifecycle
    # ------------------------------------------------------------------

    def reset(self, rng: np.random.Generator,
              geometry: LinkGeometry | None = None) -> np.ndarray:
        """Fresh geometry, gains, empty queues, embeddings, first fading draw."""
        self.rng = rng
        self.geometry = place_vehicles(self.config, rng) if geometry is None else geometry
        self.channel = build_channel(self.geometry, self.config, rng)
        self.queues = [QueueState() for _ in range(self.config.num_links)]
        self.slot = 0
        self.features_std = standardize_features(node_features(self.geometry, self.config))
        if self.embedder is None:
            self.embeddings = np.zeros(self.config.num_links)
        else:
            self.embeddings = np.asarray(self.embedder(self.features_std), dtype=float)
        self._last_obs = self.observe()
        return self._last_obs

    def step(self, action: JointAction):
        """Advance one slot.

        Order: sample arrivals, apply each link's keep/drop decision,
        evaluate capacities under the joint powers, serve packets, reward
        with the resulting AoI, then redraw fading for the next slot.

        Returns (next_obs, rewards (M,), records list[SlotRecord], done).
        """
        cfg = self.config
        m_links = cfg.num_links
        if self.rng is None or self.slot >= cfg.episode_slots:
            raise RuntimeError("reset() the environment before stepping")
        powers = np.asarray(action.powers_mw, dtype=float)
        flags = np.asarray(action.drop_flags, dtype=int)
        if powers.shape != (m_links,) or flags.shape != (m_links,):
            raise ValueError("action arrays must have one entry per link")
        if (powers < -1e-12).any() or (powers > cfg.max_power_mw * (1 + 1e-9)).any():
            raise ValueError("transmit power outside [0, max_power_mw]")

        acted_on = self._last_obs
        arrived = self.rng.random(m_links) < self.arrival.arrival_prob
        caps = capacity_all(self.channel, powers, cfg)
        rewards = np.empty(m_links)
        records = []
        for m in range(m_links):
            y = packets_transmittable(float(caps[m]), cfg)
            self.queues[m], events = slot_step(self.queues[m], bool(arrived[m]),
                                               int(flags[m]), y,
                                               self.arrival.batch_size)
            rewards[m] = -float(self.queues[m].aoi_rx)
            records.append(SlotRecord(state=acted_on[m], gamma=int(flags[m]),
                                      power_mw=float(powers[m]),
                                      reward=float(rewards[m]),
                                      capacity_bps=float(caps[m]),
                                      packets_sent=events.packets_sent,
                                      arrived=bool(arrived[m]),
                                      events=events))
        self.channel = resample_fading(self.channel, self.rng)
        self.slot += 1
        self._last_obs = self.observe()
        done = self.slot >= cfg.episode_slots
        return self._last_obs, rewards, records, done

    # ------------------------------------------------------------------
    # Observations
    # ------------------------------------------------------------------

    def _age_feature(self, age: int | None) -> float:
        n = self.config.episode_slots
        return (n + 1) / n if age is None else age / n

    def agent_state(self, m: int) -> np.ndarray:
        """Local 7-dim observation of link m: embedding, direct |h|, queue, ages, AoI."""
        q = self.queues[m]
        u = self.arrival.batch_size
        n = self.config.episode_slots
        return np.array([
            self.embeddings[m],
            abs(self.channel.small_scale[m, m]),
            q.q1 / u,
            self._age_feature(q.age1),
            q.q2 / u,
            self._age_feature(q.age2),
            q.aoi_rx / n,
        ])

    def observe(self) -> np.ndarray:
        return np.stack([self.agent_state(m) for m in range(self.config.num_links)])

    def gain_matrix(self) -> np.ndarray:
        """Instantaneous linear gains (tx i -> rx m) for this slot."""
        return self.channel.effective_gain()

    # ------------------------------------------------------------------
    # Whole-episode driver
    # ------------------------------------------------------------------

    def run_episode(self, policy: Policy,
                    rng: np.random.Generator | None = None,
                    geometry: LinkGeometry | None = None) -> EpisodeResult:
        """Run a full episode under ``policy``; reset first if ``rng`` given."""
        if rng is not None:
            self.reset(rng, geometry=geometry)
        if self._last_obs is None:
            raise RuntimeError("reset() the environment before running an episode")
        cfg = self.config
        n, m_links = cfg.episode_slots, cfg.num_links
        aoi = np.empty((n, m_links))
        gam = np.empty((n, m_links), dtype=int)
        pow_tr = np.empty((n, m_links))
        arr = np.empty((n, m_links), dtype=bool)
        rew = np.empty((n, m_links))
        cap = np.empty((n, m_links))
        pkts = np.empty((n, m_links), dtype=int)
        drops = np.empty((n, m_links), dtype=int)
        obs = self._last_obs
        for slot in range(n):
            action = policy(obs, self)
            obs, rewards, records, _ = self.step(action)
            for m, rec in enumerate(records):
                aoi[slot, m] = -rec.reward
                gam[slot, m] = rec.gamma
                pow_tr[slot, m] = rec.power_mw
                rew[slot, m] = rec.reward
                cap[slot, m] = rec.capacity_bps
                pkts[slot, m] = rec.packets_sent
                drops[slot, m] = rec.events.batches_dropped
                arr[slot, m] = rec.arrived
        return self._finish_episode(aoi, gam, pow_tr, arr, rew, cap, pkts, drops)

    def _finish_episode(self, aoi, gam, pow_tr, arr, rew, cap, pkts, drops) -> EpisodeResult:
        cfg = self.config
        sent = int(pkts.sum())
        duration_s = cfg.episode_slots * cfg.slot_duration_s
        return EpisodeResult(
            mean_aoi_slots=float(aoi.mean()),
            mean_aoi_per_link=aoi.mean(axis=0),
            mean_reward=float(rew.mean()),
            total_return=float(rew.sum()),
            drops=int(drops.sum()),
            packets_sent=sent,
            throughput_bps=sent * cfg.packet_bits / duration_s,
            aoi_trace=aoi,
            gamma_trace=gam,
            power_trace=pow_tr,
            arrival_trace=arr,
            reward_trace=rew,
            capacity_trace=cap,
            packets_trace=pkts,
            drops_trace=drops,
        )
