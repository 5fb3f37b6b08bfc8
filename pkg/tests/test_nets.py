import math

import numpy as np
import pytest

from aoisim.nets import (AdamState, DenseLayer, DenseNet, adam_init, adam_step,
                         backward, categorical_entropy, categorical_logprob,
                         clip_gradients, dense_net, forward, forward_tape,
                         gaussian_entropy, gaussian_logprob, global_norm,
                         load_tensors, log_softmax, save_tensors, sigmoid,
                         softmax)
from aoisim.oracles import (finite_difference, gaussian_entropy_quadrature,
                            max_relative_error)


class TestForward:
    def test_identity_network(self):
        net = DenseNet([DenseLayer(np.eye(3), np.zeros(3), "identity")])
        x = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(forward(net, x), x)

    def test_zero_network_outputs_activation_of_zero(self):
        net = DenseNet([DenseLayer(np.zeros((4, 3)), np.zeros(4), "tanh")])
        np.testing.assert_array_equal(forward(net, np.ones(3)), np.zeros(4))

    def test_matches_hand_matrix_arithmetic(self):
        rng = np.random.default_rng(0)
        net = dense_net([3, 5, 2], ["tanh", "identity"], rng)
        x = rng.normal(size=3)
        h = np.tanh(net.layers[0].weight @ x + net.layers[0].bias)
        expected = net.layers[1].weight @ h + net.layers[1].bias
        np.testing.assert_allclose(forward(net, x), expected, atol=1e-12)

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(1)
        net = dense_net([4, 6, 3], ["relu", "identity"], rng)
        xs = rng.normal(size=(7, 4))
        batched = forward(net, xs)
        for i in range(7):
            np.testing.assert_allclose(batched[i], forward(net, xs[i]), atol=1e-12)

    def test_dimension_mismatch(self):
        net = dense_net([3, 2], ["identity"], np.random.default_rng(0))
        with pytest.raises(ValueError):
            forward(net, np.zeros(4))


class TestBackward:
    def test_scalar_product_rule(self):
        w = np.array([[2.5]])
        net = DenseNet([DenseLayer(w, np.zeros(1), "identity")])
        x = np.array([3.0])
        _, tape = forward_tape(net, x)
        grads, dx = backward(net, tape, np.array([1.0]))
        assert grads["l0.weight"][0, 0] == pytest.approx(3.0)
        assert dx[0] == pytest.approx(2.5)

    def test_zero_upstream_zero_grads(self):
        rng = np.random.default_rng(2)
        net = dense_net([3, 4, 2], ["tanh", "identity"], rng)
        _, tape = forward_tape(net, rng.normal(size=3))
        grads, dx = backward(net, tape, np.zeros(2))
        assert all(np.all(g == 0.0) for g in grads.values())
        assert np.all(dx == 0.0)

    @pytest.mark.parametrize("acts", [["tanh", "identity"],
                                      ["relu", "tanh"],
                                      ["identity", "relu"]])
    def test_finite_difference(self, acts):
        rng = np.random.default_rng(5)
        net = dense_net([4, 6, 3], acts, rng)
        x = rng.normal(size=(5, 4))
        target = rng.normal(size=(5, 3))

        def loss():
            out = forward(net, x)
            return float(((out - target) ** 2).sum())

        out, tape = forward_tape(net, x)
        grads, _ = backward(net, tape, 2.0 * (out - target))
        numeric = finite_difference(loss, net.param_dict(""))
        assert max_relative_error(grads, numeric) <= 1e-4


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([1.0, -2.0])}
        state = adam_init(params, lr=0.1)
        adam_step(state, params, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"], np.array([1.0, -2.0]))

    def test_constant_gradient_descends(self):
        params = {"w": np.array([0.0])}
        state = adam_init(params, lr=0.01)
        for _ in range(100):
            adam_step(state, params, {"w": np.array([2.0])})
        assert params["w"][0] < 0.0

    def test_quadratic_bowl_convergence(self):
        # minimize (w - 3)^2 with lr 1e-2; per-step travel is bounded by lr
        params = {"w": np.array([2.0])}
        state = adam_init(params, lr=1e-2)
        for _ in range(500):
            adam_step(state, params, {"w": 2.0 * (params["w"] - 3.0)})
        assert abs(params["w"][0] - 3.0) <= 1e-3

    def test_scalar_parameter_updates_in_place(self):
        p = np.array(0.5)
        params = {"s": p}
        state = adam_init(params, lr=0.05)
        adam_step(state, params, {"s": np.array(1.0)})
        assert params["s"] is p
        assert float(p) < 0.5

    def test_clip_gradients(self):
        grads = {"a": np.array([3.0, 4.0])}
        clipped = clip_gradients(grads, 0.5)
        assert global_norm(clipped) == pytest.approx(0.5)
        small = {"a": np.array([0.1])}
        assert clip_gradients(small, 0.5)["a"] is small["a"]


class TestDistributions:
    def test_gaussian_logprob_peak(self):
        for log_std in (-1.0, 0.0, 0.7):
            expected = -log_std - 0.5 * math.log(2 * math.pi)
            assert gaussian_logprob(0.3, 0.3, log_std) == pytest.approx(expected)

    def test_gaussian_logprob_matches_density(self):
        x, mu, log_std = 0.7, 0.2, -0.4
        sigma = math.exp(log_std)
        density = math.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
        assert gaussian_logprob(x, mu, log_std) == pytest.approx(math.log(density))

    def test_uniform_binary_entropy(self):
        assert categorical_entropy(np.zeros(2)) == pytest.approx(math.log(2.0))

    def test_categorical_probs_sum_to_one(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(scale=5.0, size=(200, 2))
        sums = softmax(logits).sum(axis=-1)
        assert np.abs(sums - 1.0).max() <= 1e-12

    def test_categorical_logprob_gather(self):
        logits = np.array([[0.3, -0.2], [1.0, 2.0]])
        lp = log_softmax(logits)
        got = categorical_logprob(np.array([1, 0]), logits)
        np.testing.assert_allclose(got, [lp[0, 1], lp[1, 0]], atol=1e-15)

    def test_gaussian_entropy_vs_quadrature(self):
        for log_std in (-0.5, 0.0, 0.4):
            quad = gaussian_entropy_quadrature(log_std)
            assert gaussian_entropy(log_std) == pytest.approx(quad, abs=1e-6)

    def test_sigmoid_range(self):
        x = np.linspace(-20, 20, 101)
        s = sigmoid(x)
        assert (s > 0).all() and (s < 1).all()
        assert sigmoid(0.0) == pytest.approx(0.5)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {
            "actor0.trunk.l0.weight": rng.normal(size=(4, 3)),
            "scalar": np.array(1.25),
            "vec": rng.normal(size=7),
        }
        header = {"config_digest": "abc", "episode": 12,
                  "rng_state": {"state": 123456789123456789}}
        path = tmp_path / "params.bin"
        save_tensors(path, tensors, header)
        got_header, got = load_tensors(path)
        assert got_header == header
        assert set(got) == set(tensors)
        for name in tensors:
            np.testing.assert_array_equal(got[name], tensors[name])
            assert got[name].dtype == np.float64

    def test_little_endian_payload(self, tmp_path):
        path = tmp_path / "one.bin"
        save_tensors(path, {"x": np.array([1.0])}, {})
        blob = path.read_bytes()
        assert np.frombuffer(blob[-8:], dtype="<f8")[0] == 1.0

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            load_tensors(path)
