import math

import numpy as np
import pytest

from aoisim.topology import (ChannelRealization, LinkGeometry, NetworkConfig,
                             build_channel, capacity, capacity_all, dbm_to_mw,
                             packets_transmittable, path_loss_db, place_vehicles,
                             resample_fading)


def make_config(**kwargs):
    return NetworkConfig(**kwargs)


class TestConfigValidation:
    def test_defaults_are_valid(self):
        cfg = make_config()
        assert cfg.num_links == 4
        assert cfg.bandwidth_hz == 1e6
        assert cfg.max_power_mw == pytest.approx(10.0)
        assert cfg.noise_mw == pytest.approx(dbm_to_mw(-114.0))

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            make_config(num_links=0)
        with pytest.raises(ValueError):
            make_config(bandwidth_hz=0.0)
        with pytest.raises(ValueError):
            make_config(pair_distance_m=(50.0, 10.0))
        with pytest.raises(ValueError):
            make_config(episode_slots=0)


class TestPlacement:
    def test_single_pair_distance_in_range(self):
        cfg = make_config(num_links=1, road_length_m=500.0,
                          pair_distance_m=(10.0, 50.0))
        geo = place_vehicles(cfg, np.random.default_rng(0))
        d = float(geo.pair_distances()[0])
        assert 10.0 <= d <= 50.0

    def test_fixed_seed_reproducible(self):
        cfg = make_config(road_length_m=500.0, pair_distance_m=(10.0, 50.0))
        g1 = place_vehicles(cfg, np.random.default_rng(42))
        g2 = place_vehicles(cfg, np.random.default_rng(42))
        np.testing.assert_array_equal(g1.tx, g2.tx)
        np.testing.assert_array_equal(g1.rx, g2.rx)

    def test_monte_carlo_distance_range(self):
        # 10^4 pairs; the clamp fallback may leave a tiny out-of-range tail
        cfg = make_config(num_links=4, road_length_m=500.0,
                          pair_distance_m=(10.0, 50.0))
        rng = np.random.default_rng(7)
        dists = np.concatenate([place_vehicles(cfg, rng).pair_distances()
                                for _ in range(2500)])
        assert dists.size == 10_000
        in_range = (dists >= 10.0 - 1e-9) & (dists <= 50.0 + 1e-9)
        assert in_range.mean() >= 0.99

    def test_positions_stay_on_road(self):
        cfg = make_config(num_links=8, road_length_m=300.0,
                          pair_distance_m=(10.0, 50.0))
        rng = np.random.default_rng(3)
        for _ in range(200):
            geo = place_vehicles(cfg, rng)
            lanes = np.asarray(cfg.lane_offsets_m)
            for pos in (geo.tx, geo.rx):
                assert (pos[:, 0] >= 0.0).all() and (pos[:, 0] <= 300.0).all()
                assert (pos[:, 1] >= lanes.min()).all()
                assert (pos[:, 1] <= lanes.max()).all()


class TestPathLoss:
    def test_one_meter_value(self):
        cfg = make_config(carrier_freq_ghz=2.0)
        assert path_loss_db(1.0, cfg) == pytest.approx(
            38.77 + 18.2 * math.log10(2.0), abs=1e-12)

    def test_decade_step(self):
        cfg = make_config(carrier_freq_ghz=2.0)
        assert path_loss_db(10.0, cfg) - path_loss_db(1.0, cfg) == pytest.approx(16.7)

    def test_independent_recomputation(self):
        cfg = make_config(carrier_freq_ghz=2.0)
        expected = 38.77 + 16.7 * math.log10(32.0) + 18.2 * math.log10(2.0)
        assert path_loss_db(32.0, cfg) == pytest.approx(expected, abs=1e-9)

    def test_floor_below_one_meter(self):
        cfg = make_config()
        assert path_loss_db(0.2, cfg) == path_loss_db(1.0, cfg)

    def test_monotone(self):
        cfg = make_config()
        d = np.linspace(0.0, 800.0, 400)
        pl = path_loss_db(d, cfg)
        assert (np.diff(pl) >= 0.0).all()


class TestChannel:
    def test_zero_loss_zero_gain_unity(self):
        cfg = make_config(num_links=1, antenna_gain_tx_db=0.0,
                          antenna_gain_rx_db=0.0, noise_figure_db=0.0)
        # distance 1 m gives PL(1) dB; build the exponent by hand instead
        geo = LinkGeometry(tx=np.array([[0.0, 0.0]]), rx=np.array([[1.0, 0.0]]))
        chan = build_channel(geo, cfg, np.random.default_rng(0))
        expected = 10.0 ** (-path_loss_db(1.0, cfg) / 10.0)
        assert chan.large_scale_gain[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_gain_exponent_arithmetic(self):
        # 3+3 dB gains, 100 dB loss, 9 dB noise figure -> 10^(-10.3)
        cfg = make_config(num_links=1, antenna_gain_tx_db=3.0,
                          antenna_gain_rx_db=3.0, noise_figure_db=9.0)
        d = 10.0 ** ((100.0 - 38.77 - 18.2 * math.log10(2.0)) / 16.7)
        geo = LinkGeometry(tx=np.array([[0.0, 0.0]]), rx=np.array([[d, 0.0]]))
        chan = build_channel(geo, cfg, np.random.default_rng(0))
        assert chan.large_scale_gain[0, 0] == pytest.approx(10.0 ** (-10.3),
                                                            rel=1e-9)

    def test_mirrored_geometry_symmetric_gains(self):
        cfg = make_config(num_links=2)
        geo = LinkGeometry(tx=np.array([[100.0, 0.0], [400.0, 0.0]]),
                           rx=np.array([[120.0, 0.0], [380.0, 0.0]]))
        chan = build_channel(geo, cfg, np.random.default_rng(0))
        g = chan.large_scale_gain
        assert g[0, 0] == pytest.approx(g[1, 1], rel=1e-12)
        assert g[0, 1] == pytest.approx(g[1, 0], rel=1e-12)

    def test_resample_keeps_large_scale(self):
        cfg = make_config()
        geo = place_vehicles(cfg, np.random.default_rng(1))
        chan = build_channel(geo, cfg, np.random.default_rng(2))
        before = chan.large_scale_gain.copy()
        for _ in range(5):
            chan = resample_fading(chan, np.random.default_rng(3))
        np.testing.assert_array_equal(chan.large_scale_gain, before)

    def test_distinct_seeds_distinct_fading(self):
        cfg = make_config()
        geo = place_vehicles(cfg, np.random.default_rng(1))
        chan = build_channel(geo, cfg, np.random.default_rng(2))
        a = resample_fading(chan, np.random.default_rng(10))
        b = resample_fading(chan, np.random.default_rng(11))
        assert not np.allclose(a.small_scale, b.small_scale)

    def test_fading_second_moment(self):
        # >= 1e5 draws, mean |h|^2 within 2% of 1
        cfg = make_config(num_links=10, lane_offsets_m=(0.0, 4.0))
        geo = place_vehicles(cfg, np.random.default_rng(0))
        chan = build_channel(geo, cfg, np.random.default_rng(0))
        rng = np.random.default_rng(5)
        total, count = 0.0, 0
        for _ in range(1000):
            chan = resample_fading(chan, rng)
            total += float((np.abs(chan.small_scale) ** 2).sum())
            count += chan.small_scale.size
        assert count >= 100_000
        assert abs(total / count - 1.0) <= 0.02


class TestCapacity:
    def _unit_channel(self, gains):
        gains = np.asarray(gains, dtype=float)
        return ChannelRealization(large_scale_gain=gains,
                                  small_scale=np.ones_like(gains, dtype=complex))

    def test_single_link_log2(self):
        cfg = make_config(num_links=1, bandwidth_hz=1e6)
        chan = self._unit_channel([[3.0 * cfg.noise_mw]])
        assert capacity(chan, np.array([1.0]), 0, cfg) == pytest.approx(2e6)

    def test_zero_power_zero_capacity(self):
        cfg = make_config(num_links=2)
        chan = self._unit_channel([[1e-6, 1e-8], [1e-8, 1e-6]])
        caps = capacity_all(chan, np.array([0.0, 5.0]), cfg)
        assert caps[0] == 0.0

    def test_matches_scalar_recomputation(self):
        cfg = make_config(num_links=2)
        rng = np.random.default_rng(9)
        gains = 10.0 ** rng.uniform(-9, -6, size=(2, 2))
        h = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
        chan = ChannelRealization(large_scale_gain=gains, small_scale=h)
        p = rng.uniform(0.0, cfg.max_power_mw, size=2)
        for m in range(2):
            g = gains * np.abs(h) ** 2
            interference = sum(g[i, m] * p[i] for i in range(2) if i != m)
            expected = cfg.bandwidth_hz * math.log2(
                1.0 + g[m, m] * p[m] / (cfg.noise_mw + interference))
            assert capacity(chan, p, m, cfg) == pytest.approx(expected, rel=1e-9)

    def test_monotone_in_own_power(self):
        cfg = make_config(num_links=2)
        chan = self._unit_channel([[1e-6, 1e-8], [1e-8, 1e-6]])
        caps = [capacity(chan, np.array([p, 5.0]), 0, cfg)
                for p in np.linspace(0.1, cfg.max_power_mw, 30)]
        assert (np.diff(caps) > 0.0).all()

    def test_non_increasing_in_interferer_power(self):
        cfg = make_config(num_links=2)
        chan = self._unit_channel([[1e-6, 1e-8], [1e-8, 1e-6]])
        caps = [capacity(chan, np.array([5.0, p]), 0, cfg)
                for p in np.linspace(0.0, cfg.max_power_mw, 30)]
        assert (np.diff(caps) <= 1e-12).all()


class TestPackets:
    def test_two_full_packets(self):
        cfg = make_config(slot_duration_s=1e-3, packet_bits=3000)
        assert packets_transmittable(6e6, cfg) == 2

    def test_sub_packet_rate(self):
        cfg = make_config(slot_duration_s=1e-3, packet_bits=3000)
        assert packets_transmittable(2.9e6, cfg) == 0

    def test_floor_not_round(self):
        cfg = make_config(slot_duration_s=1e-3, packet_bits=3000)
        assert packets_transmittable(8.999e6, cfg) == 2

    def test_floor_bracketing_property(self):
        cfg = make_config()
        rng = np.random.default_rng(2)
        for c in rng.uniform(0.0, 5e7, size=300):
            y = packets_transmittable(float(c), cfg)
            bits = cfg.slot_duration_s * c
            assert y * cfg.packet_bits <= bits < (y + 1) * cfg.packet_bits

    def test_negative_capacity_rejected(self):
        with pytest.raises(ValueError):
            packets_transmittable(-1.0, make_config())
