import math

import numpy as np
import pytest

from aoisim.gnn import (GraphSpec, SageParams, encode, init_sage, metric_loss,
                        metric_loss_grad, node_features, sample_plan,
                        sample_size, standardize_features, update)
from aoisim.oracles import dense_sage_reference, finite_difference, max_relative_error
from aoisim.topology import NetworkConfig, place_vehicles


class TestSampleSize:
    @pytest.mark.parametrize("nodes,expected", [(4, 3), (100, 20), (2, 2), (1, 2),
                                                (9, 6), (16, 8)])
    def test_formula(self, nodes, expected):
        assert sample_size(nodes) == expected

    def test_clamped_at_sampling_time(self):
        # budget 2 for a 2-node graph, but only 1 neighbor exists
        spec = GraphSpec.for_nodes(2)
        plan = sample_plan(spec, np.random.default_rng(0))
        for mat in plan:
            assert mat[0, 1] == 1.0 and mat[1, 0] == 1.0
            assert mat[0, 0] == 0.0 and mat[1, 1] == 0.0


class TestEncode:
    def test_zero_weights_zero_embedding(self):
        params = SageParams(w0=np.zeros((16, 10)), w1=np.zeros((1, 32)))
        feats = np.random.default_rng(0).normal(size=(4, 5))
        f = encode(feats, params, GraphSpec.for_nodes(4), np.random.default_rng(1))
        np.testing.assert_array_equal(f, np.zeros(4))

    def test_isolated_node_formula(self):
        rng = np.random.default_rng(2)
        params = init_sage(rng)
        x = rng.normal(size=(1, 5))
        f = encode(x, params, GraphSpec.for_nodes(1), np.random.default_rng(0))
        hidden = np.maximum(params.w0 @ np.concatenate([x[0], np.zeros(5)]), 0.0)
        expected = float((params.w1 @ np.concatenate([hidden, np.zeros(16)]))[0])
        assert f[0] == pytest.approx(expected, abs=1e-12)

    def test_full_sampling_matches_dense_reference(self):
        # 3 nodes: budget covers the whole neighborhood
        rng = np.random.default_rng(3)
        params = init_sage(rng)
        feats = rng.normal(size=(3, 5))
        f = encode(feats, params, GraphSpec.for_nodes(3), np.random.default_rng(9))
        neighbors = [[1, 2], [0, 2], [0, 1]]
        ref = dense_sage_reference(feats, params.w0, params.w1, neighbors, neighbors)
        np.testing.assert_allclose(f, ref, atol=1e-9)

    def test_full_sampling_deterministic(self):
        rng = np.random.default_rng(4)
        params = init_sage(rng)
        feats = rng.normal(size=(4, 5))  # sample_size(4)=3 covers all neighbors
        spec = GraphSpec.for_nodes(4)
        f1 = encode(feats, params, spec, np.random.default_rng(100))
        f2 = encode(feats, params, spec, np.random.default_rng(200))
        np.testing.assert_array_equal(f1, f2)

    def test_sampled_plan_matches_reference_on_same_sets(self):
        rng = np.random.default_rng(5)
        params = init_sage(rng)
        m = 9  # sample_size(9)=6 < 8 neighbors, so sampling is real
        feats = rng.normal(size=(m, 5))
        spec = GraphSpec.for_nodes(m)
        plan = sample_plan(spec, rng)
        f = encode(feats, params, spec, rng, plan=plan)
        sets = [[list(np.nonzero(mat[i])[0]) for i in range(m)] for mat in plan]
        ref = dense_sage_reference(feats, params.w0, params.w1, sets[0], sets[1])
        np.testing.assert_allclose(f, ref, atol=1e-9)


class TestStandardize:
    def test_zero_mean_unit_variance(self):
        rng = np.random.default_rng(6)
        raw = rng.normal(loc=50.0, scale=9.0, size=(8, 5))
        std = standardize_features(raw)
        np.testing.assert_allclose(std.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(std.std(axis=0), 1.0, atol=1e-12)

    def test_constant_column_maps_to_zero(self):
        raw = np.column_stack([np.full(4, 7.0), np.arange(4.0)])
        std = standardize_features(raw)
        np.testing.assert_array_equal(std[:, 0], np.zeros(4))

    def test_node_features_layout(self):
        cfg = NetworkConfig()
        geo = place_vehicles(cfg, np.random.default_rng(0))
        raw = node_features(geo, cfg)
        assert raw.shape == (cfg.num_links, 5)
        np.testing.assert_allclose(raw[:, 1:3], geo.tx)
        np.testing.assert_allclose(raw[:, 3:5], geo.rx)


class TestMetricLoss:
    def test_identical_kernels_zero(self):
        f = np.full(4, 1.3)
        adv = np.full(4, -0.2)
        assert metric_loss(f, adv) == 0.0

    def test_two_node_closed_form(self):
        tau1 = 0.7
        f = np.array([0.0, math.sqrt(tau1)])
        adv = np.array([0.4, 0.4])
        expected = (math.exp(-1.0) - 1.0) ** 2
        assert metric_loss(f, adv, tau1=tau1, tau2=1.0) == pytest.approx(
            expected, abs=1e-9)

    def test_brute_force_pairwise(self):
        rng = np.random.default_rng(7)
        f = rng.normal(size=4)
        adv = rng.normal(size=4)
        tau1, tau2 = 0.9, 1.7
        total = 0.0
        for i in range(4):
            for j in range(4):
                if i == j:
                    continue
                k_f = math.exp(-(f[i] - f[j]) ** 2 / tau1)
                k_a = math.exp(-abs(adv[i] - adv[j]) / tau2)
                total += (k_f - k_a) ** 2
        expected = total / (4 * 3)
        assert metric_loss(f, adv, tau1, tau2) == pytest.approx(expected, abs=1e-12)

    def test_non_negative_and_permutation_symmetric(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            f = rng.normal(size=5)
            adv = rng.normal(size=5)
            loss = metric_loss(f, adv)
            assert loss >= 0.0
            perm = rng.permutation(5)
            assert metric_loss(f[perm], adv[perm]) == pytest.approx(loss, abs=1e-12)

    def test_single_node_is_zero(self):
        assert metric_loss(np.array([2.0]), np.array([1.0])) == 0.0

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(9)
        f = rng.normal(size=5)
        adv = rng.normal(size=5)
        _, grad = metric_loss_grad(f, adv, 0.8, 1.3)
        params = {"f": f}
        numeric = finite_difference(lambda: metric_loss(f, adv, 0.8, 1.3), params)
        assert max_relative_error({"f": grad}, numeric) <= 1e-6


class TestUpdate:
    def test_zero_learning_rate_is_identity(self):
        rng = np.random.default_rng(10)
        params = init_sage(rng)
        feats = rng.normal(size=(4, 5))
        adv = rng.normal(size=4)
        new, _ = update(params, feats, GraphSpec.for_nodes(4), adv, 1.0, 1.0,
                        0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(new.w0, params.w0)
        np.testing.assert_array_equal(new.w1, params.w1)

    def test_gradient_matches_finite_difference(self):
        from aoisim.gnn import _encode_backward, _encode_tape
        rng = np.random.default_rng(11)
        params = init_sage(rng)
        feats = rng.normal(size=(4, 5))
        adv = rng.normal(size=4)
        spec = GraphSpec.for_nodes(4)
        plan = sample_plan(spec, rng)

        def loss():
            f, _ = _encode_tape(feats, params, plan)
            return metric_loss_grad(f, adv)[0]

        f, tape = _encode_tape(feats, params, plan)
        _, dout = metric_loss_grad(f, adv)
        dw0, dw1 = _encode_backward(params, plan, tape, dout)
        numeric = finite_difference(loss, {"w0": params.w0, "w1": params.w1})
        assert max_relative_error({"w0": dw0, "w1": dw1}, numeric) <= 1e-4

    def test_descent_on_frozen_sample(self):
        # repeated small steps shrink the loss after a short transient
        rng = np.random.default_rng(12)
        params = init_sage(rng)
        feats = rng.normal(size=(4, 5))
        adv = rng.normal(size=4)
        spec = GraphSpec.for_nodes(4)
        losses = []
        for _ in range(40):
            params, loss = update(params, feats, spec, adv, 1.0, 1.0, 1e-3,
                                  np.random.default_rng(0))
            losses.append(loss)
        tail = losses[5:]
        assert all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))
        assert tail[-1] < losses[0]

    def test_temperature_validation(self):
        with pytest.raises(ValueError):
            metric_loss(np.zeros(3), np.zeros(3), tau1=0.0)
