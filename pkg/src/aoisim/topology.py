"""Link geometry, path loss, Rayleigh block fading, and capacity math.

Conventions: powers and noise are linear milliwatts, channel gains are
linear power ratios, and ``gain[i, m]`` couples transmitter ``i`` to
receiver ``m``. Large-scale gains stay fixed for a whole episode; the
small-scale matrix is redrawn every slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NetworkConfig",
    "LinkGeometry",
    "ChannelRealization",
    "dbm_to_mw",
    "mw_to_dbm",
    "place_vehicles",
    "path_loss_db",
    "build_channel",
    "resample_fading",
    "capacity",
    "capacity_all",
    "packets_transmittable",
]


def dbm_to_mw(dbm: float) -> float:
    """dBm to linear milliwatts."""
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    """Linear milliwatts to dBm."""
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class NetworkConfig:
    """Static parameters of the M-link V2V network.

    ``noise_mw`` and ``max_power_mw`` are linear; convert dBm values with
    :func:`dbm_to_mw`. ``lane_offsets_m`` are the lateral lane positions a
    transmitter can occupy; the road rectangle spans ``[0, road_length_m]``
    by ``[min(lanes), max(lanes)]``.
    """

    num_links: int = 4
    bandwidth_hz: float = 1e6
    slot_duration_s: float = 1e-3
    packet_bits: int = 3000
    noise_mw: float = dbm_to_mw(-114.0)
    max_power_mw: float = dbm_to_mw(10.0)
    carrier_freq_ghz: float = 2.0
    antenna_gain_tx_db: float = 3.0
    antenna_gain_rx_db: float = 3.0
    noise_figure_db: float = 9.0
    antenna_height_m: float = 1.5
    episode_slots: int = 100
    road_length_m: float = 2000.0
    lane_offsets_m: tuple[float, ...] = (0.0, 4.0, 8.0, 12.0)
    pair_distance_m: tuple[float, float] = (10.0, 50.0)

    def __post_init__(self) -> None:
        if self.num_links < 1:
            raise ValueError("num_links must be >= 1")
        for name in ("bandwidth_hz", "slot_duration_s", "packet_bits",
                     "noise_mw", "max_power_mw", "road_length_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.episode_slots < 1:
            raise ValueError("episode_slots must be >= 1")
        if len(self.lane_offsets_m) == 0:
            raise ValueError("at least one lane offset is required")
        lo, hi = self.pair_distance_m
        if lo < 0 or lo > hi:
            raise ValueError("pair_distance_m must satisfy 0 <= min <= max")


@dataclass(frozen=True)
class LinkGeometry:
    """Transmitter/receiver positions for each link, in meters."""

    tx: np.ndarray  # (M, 2)
    rx: np.ndarray  # (M, 2)

    @property
    def num_links(self) -> int:
        return self.tx.shape[0]

    def pair_distances(self) -> np.ndarray:
        """Direct tx->rx distance per link."""
        return np.linalg.norm(self.tx - self.rx, axis=1)

    def cross_distances(self) -> np.ndarray:
        """(i, m) entry is the distance from transmitter i to receiver m."""
        diff = self.tx[:, None, :] - self.rx[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class ChannelRealization:
    """One large-scale realization plus the current small-scale draw."""

    large_scale_gain: np.ndarray  # (M, M) linear power gain, tx i -> rx m
    small_scale: np.ndarray       # (M, M) complex, unit second moment

    @property
    def num_links(self) -> int:
        return self.large_scale_gain.shape[0]

    def effective_gain(self) -> np.ndarray:
        """Instantaneous linear power gains ``large * |small|^2``."""
        return self.large_scale_gain * np.abs(self.small_scale) ** 2


def place_vehicles(config: NetworkConfig, rng: np.random.Generator) -> LinkGeometry:
    """Drop M tx/rx pairs on the road rectangle.

    The transmitter x-coordinate is uniform along the road and its lane is
    uniform over ``lane_offsets_m``. The receiver sits at a uniform distance
    from ``pair_distance_m`` under a uniform angle; the draw is retried up to
    100 times to stay on the rectangle and clamped afterwards, so placement
    never fails (the clamp can violate the distance range in a rare tail).
    """
    m_links = config.num_links
    lanes = np.asarray(config.lane_offsets_m, dtype=float)
    y_lo, y_hi = float(lanes.min()), float(lanes.max())
    d_lo, d_hi = config.pair_distance_m
    tx = np.empty((m_links, 2))
    rx = np.empty((m_links, 2))
    for m in range(m_links):
        tx[m, 0] = rng.uniform(0.0, config.road_length_m)
        tx[m, 1] = lanes[rng.integers(len(lanes))]
        cand = tx[m]
        for _ in range(100):
            dist = rng.uniform(d_lo, d_hi)
            angle = rng.uniform(0.0, 2.0 * np.pi)
            cand = tx[m] + dist * np.array([np.cos(angle), np.sin(angle)])
            if 0.0 <= cand[0] <= config.road_length_m and y_lo <= cand[1] <= y_hi:
                break
        else:
            cand = np.array([np.clip(cand[0], 0.0, config.road_length_m),
                             np.clip(cand[1], y_lo, y_hi)])
        rx[m] = cand
    return LinkGeometry(tx=tx, rx=rx)


def path_loss_db(distance_m, config: NetworkConfig):
    """Highway line-of-sight path loss in dB; distances are floored at 1 m."""
    d = np.maximum(np.asarray(distance_m, dtype=float), 1.0)
    pl = 38.77 + 16.7 * np.log10(d) + 18.2 * np.log10(config.carrier_freq_ghz)
    return float(pl) if np.isscalar(distance_m) else pl


def _draw_fading(m_links: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. circularly-symmetric complex Gaussian entries, E|h|^2 = 1."""
    real = rng.standard_normal((m_links, m_links))
    imag = rng.standard_normal((m_links, m_links))
    return (real + 1j * imag) / np.sqrt(2.0)


def build_channel(geometry: LinkGeometry, config: NetworkConfig,
                  rng: np.random.Generator) -> ChannelRealization:
    """Large-scale gains from geometry plus an initial fading draw.

    Antenna gains and the receiver noise figure are applied uniformly to
    every tx->rx path, interference paths included.
    """
    pl = path_loss_db(geometry.cross_distances(), config)
    gain_db = (config.antenna_gain_tx_db + config.antenna_gain_rx_db
               - pl - config.noise_figure_db)
    large = 10.0 ** (gain_db / 10.0)
    return ChannelRealization(large_scale_gain=large,
                              small_scale=_draw_fading(geometry.num_links, rng))


def resample_fading(chan: ChannelRealization,
                    rng: np.random.Generator) -> ChannelRealization:
    """Redraw every small-scale coefficient; large-scale gains are shared."""
    return ChannelRealization(large_scale_gain=chan.large_scale_gain,
                              small_scale=_draw_fading(chan.num_links, rng))


def capacity_all(chan: ChannelRealization, powers_mw: np.ndarray,
                 config: NetworkConfig) -> np.ndarray:
    """Shannon capacity in bits/s of every link under the joint power vector."""
    p = np.asarray(powers_mw, dtype=float)
    received = chan.effective_gain() * p[:, None]  # (i, m): tx i's power at rx m
    signal = np.diag(received).copy()
    interference = received.sum(axis=0) - signal
    sinr = signal / (config.noise_mw + interference)
    return config.bandwidth_hz * np.log2(1.0 + sinr)


def capacity(chan: ChannelRealization, powers_mw: np.ndarray, m: int,
             config: NetworkConfig) -> float:
    """Capacity of link ``m`` only; see :func:`capacity_all`."""
    return float(capacity_all(chan, powers_mw, config)[m])


def packets_transmittable(capacity_bps: float, config: NetworkConfig) -> int:
    """Whole packets deliverable in one slot at the given rate."""
    if capacity_bps < 0:
        raise ValueError("capacity must be non-negative")
    return int(math.floor(config.slot_duration_s * capacity_bps / config.packet_bits))
