"""Mixed-precision training: forward/backward fidelity, chi flushing, drift."""

import numpy as np
import pytest

from memsim import datasets, dnn
from memsim.devices import DeviceParams
from memsim.dnn import FloatNet, MixedPrecisionNet, TrainConfig

IDEAL = DeviceParams(prog_noise_rel=0.0, read_noise_rel=0.0, drift_nu=0.0)
TIGHT_TOL = 1e-9


def rng_for(seed=0):
    return np.random.default_rng(seed)


def ideal_net(weights, biases, activations, w_max=3.0, epsilon=None):
    return MixedPrecisionNet.from_float(
        weights, biases, rng_for(0), params=IDEAL, w_max=w_max,
        epsilon=epsilon, activations=activations, prog_tol=TIGHT_TOL,
    )


def small_data(n_train=300, n_test=100, seed=0):
    X_tr, y_tr, X_te, y_te = datasets.load_digits_split(rng_for(seed))
    return X_tr[:n_train], y_tr[:n_train], X_te[:n_test], y_te[:n_test]


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

class TestForward:
    def test_zero_net_relu_gives_zero_logits(self):
        net = ideal_net([np.zeros((3, 4))], [np.zeros(3)], ["relu"])
        logits, _ = net.forward(np.ones(4) * 0.5, rng_for())
        assert np.allclose(logits, 0.0, atol=1e-6)

    def test_identity_layer_passes_input_through(self):
        net = ideal_net([np.eye(4)], [np.zeros(4)], ["softmax_out"], w_max=1.0)
        x = np.array([0.1, -0.4, 0.8, 0.0])
        logits, _ = net.forward(x, rng_for())
        assert np.allclose(logits, x, atol=1e-6)

    def test_two_layer_matches_float_oracle(self):
        rng = rng_for(1)
        W = [rng.standard_normal((6, 8)) * 0.5, rng.standard_normal((3, 6)) * 0.5]
        b = [rng.standard_normal(6) * 0.1, rng.standard_normal(3) * 0.1]
        net = ideal_net(W, b, ["relu", "softmax_out"])
        oracle = FloatNet(W, b, ["relu", "softmax_out"])
        x = rng.uniform(0, 1, 8)
        logits, _ = net.forward(x, rng)
        ref, _ = oracle.forward(x)
        assert np.allclose(logits, ref, rtol=1e-4, atol=1e-6)

    def test_dimension_mismatch(self):
        net = ideal_net([np.eye(4)], [np.zeros(4)], ["softmax_out"], w_max=1.0)
        with pytest.raises(ValueError):
            net.forward(np.zeros(3), rng_for())


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------

class TestBackward:
    def test_zero_grad_out_gives_zero_deltas(self):
        rng = rng_for(2)
        W = [rng.standard_normal((5, 6)) * 0.3]
        net = ideal_net(W, [np.zeros(5)], ["softmax_out"])
        _, cache = net.forward(rng.uniform(0, 1, 6), rng)
        grads = net.backward(cache, np.zeros(5), rng)
        assert np.allclose(grads[0][0], 0.0) and np.allclose(grads[0][1], 0.0)

    def test_linear_layer_outer_product(self):
        rng = rng_for(3)
        W = [rng.standard_normal((4, 5)) * 0.3]
        net = ideal_net(W, [np.zeros(4)], ["softmax_out"])
        x = rng.uniform(0, 1, 5)
        _, cache = net.forward(x, rng)
        g = rng.standard_normal(4)
        grads = net.backward(cache, g, rng)
        assert np.allclose(grads[0][0], np.outer(g, x), rtol=1e-5, atol=1e-8)
        assert np.allclose(grads[0][1], g)

    def test_full_net_matches_finite_differences(self):
        rng = rng_for(4)
        sizes = [6, 5, 3]
        oracle = FloatNet.build(sizes, rng)
        x = rng.uniform(0, 1, 6)
        label = 1

        def loss_of(net):
            logits, _ = net.forward(x)
            return dnn.loss_and_grad(logits, label, "cross_entropy", 3)[0]

        logits, cache = oracle.forward(x)
        _, gout = dnn.loss_and_grad(logits, label, "cross_entropy", 3)
        grads = oracle.backward(cache, gout)

        eps = 1e-5
        checked = 0
        for l in range(2):
            idx = [(i, j) for i in range(sizes[l + 1]) for j in range(sizes[l])]
            for i, j in [idx[k] for k in rng.choice(len(idx), 10, replace=False)]:
                orig = oracle.W[l][i, j]
                oracle.W[l][i, j] = orig + eps
                hi = loss_of(oracle)
                oracle.W[l][i, j] = orig - eps
                lo = loss_of(oracle)
                oracle.W[l][i, j] = orig
                fd = (hi - lo) / (2 * eps)
                if abs(fd) > 1e-8:
                    assert grads[l][0][i, j] == pytest.approx(fd, rel=1e-3)
                    checked += 1
        assert checked >= 10

    def test_analog_gradient_matches_float_oracle(self):
        rng = rng_for(5)
        W = [rng.standard_normal((5, 6)) * 0.4, rng.standard_normal((3, 5)) * 0.4]
        b = [np.zeros(5), np.zeros(3)]
        net = ideal_net(W, b, ["relu", "softmax_out"])
        oracle = FloatNet.like(net)
        x = rng.uniform(0, 1, 6)
        logits, cache = net.forward(x, rng)
        _, gout = dnn.loss_and_grad(logits, 0, "cross_entropy", 3)
        grads = net.backward(cache, gout, rng)
        o_logits, o_cache = oracle.forward(x)
        _, o_gout = dnn.loss_and_grad(o_logits, 0, "cross_entropy", 3)
        o_grads = oracle.backward(o_cache, o_gout)
        for (dW, db), (odW, odb) in zip(grads, o_grads):
            assert np.allclose(dW, odW, rtol=1e-4, atol=1e-7)
            assert np.allclose(db, odb, rtol=1e-4, atol=1e-7)

    def test_stale_cache_rejected(self):
        net = ideal_net([np.eye(3)], [np.zeros(3)], ["softmax_out"], w_max=1.0)
        with pytest.raises(ValueError):
            net.backward({"pre": [], "activations": []}, np.zeros(3), rng_for())


# ---------------------------------------------------------------------------
# apply_update / chi flushing
# ---------------------------------------------------------------------------

class TestApplyUpdate:
    def make_net(self, epsilon):
        return ideal_net([np.zeros((2, 2))], [np.zeros(2)], ["softmax_out"],
                         w_max=1.0, epsilon=epsilon)

    def test_below_threshold_no_pulses(self):
        eps = 0.01
        net = self.make_net(eps)
        dW = np.zeros((2, 2))
        dW[0, 0] = -0.3 * eps  # chi becomes +0.3 eps at lr = 1
        net.apply_update([(dW, np.zeros(2))], 1.0, rng_for())
        assert net.pulse_count == 0
        assert net.layers[0].chi[0, 0] == pytest.approx(0.3 * eps)

    def test_flush_quantum_and_residual(self):
        eps = 0.01
        net = self.make_net(eps)
        dW = np.zeros((2, 2))
        dW[0, 1] = -2.3 * eps  # chi = +2.3 eps -> 2 pulses, residual 0.3 eps
        tile = net.layers[0].weights.tiles[0][0]
        g_before = tile.g_plus[0, 1]
        net.apply_update([(dW, np.zeros(2))], 1.0, rng_for())
        assert net.pulse_count == 2
        assert net.layers[0].chi[0, 1] == pytest.approx(0.3 * eps)
        # noiseless pulse conservation: conductance moved by exactly
        # 2 * epsilon in weight units
        p = tile.params
        eps_g = eps * (p.g_max - p.g_min) / 1.0
        assert tile.g_plus[0, 1] - g_before == pytest.approx(2 * eps_g, rel=1e-9)

    def test_negative_chi_pulses_minus_device(self):
        eps = 0.01
        net = self.make_net(eps)
        dW = np.zeros((2, 2))
        dW[1, 0] = 1.5 * eps  # chi = -1.5 eps -> g_minus pulsed once
        tile = net.layers[0].weights.tiles[0][0]
        gm_before = tile.g_minus[1, 0]
        net.apply_update([(dW, np.zeros(2))], 1.0, rng_for())
        assert net.pulse_count == 1
        assert tile.g_minus[1, 0] > gm_before

    def test_zero_lr_leaves_net_unchanged(self):
        net = self.make_net(0.01)
        before = net.decoded_weights()[0].copy()
        net.apply_update([(np.ones((2, 2)), np.ones(2))], 0.0, rng_for())
        assert np.array_equal(net.decoded_weights()[0], before)
        assert np.all(net.layers[0].chi == 0.0)
        assert np.all(net.layers[0].bias == 0.0)

    def test_flush_invariant_random_updates(self):
        eps = 0.005
        net = self.make_net(eps)
        rng = rng_for(6)
        for _ in range(20):
            dW = rng.standard_normal((2, 2)) * 10 * eps
            net.apply_update([(dW, np.zeros(2))], 1.0, rng)
            assert np.all(np.abs(net.layers[0].chi) < eps)

    def test_bias_updated_in_full_precision(self):
        net = self.make_net(0.01)
        db = np.array([0.25, -0.5])
        net.apply_update([(np.zeros((2, 2)), db)], 0.1, rng_for())
        assert np.allclose(net.layers[0].bias, -0.1 * db)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

class TestTraining:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(loss="hinge")

    def test_empty_dataset_rejected(self):
        net = ideal_net([np.eye(3)], [np.zeros(3)], ["softmax_out"], w_max=1.0)
        cfg = TrainConfig(epochs=1)
        with pytest.raises(ValueError):
            dnn.train(net, ([], [], [], []), cfg, rng_for())

    def test_ideal_training_tracks_float_oracle(self):
        # epsilon -> 0 and exact devices: per-epoch losses within 1%
        data = small_data()
        sizes = [64, 16, 10]
        cfg = TrainConfig(lr=0.1, epochs=3, batch_size=16)
        w_max = 3.0
        net = MixedPrecisionNet.build(sizes, rng_for(7), params=IDEAL,
                                      w_max=w_max, epsilon=1e-6 * w_max,
                                      prog_tol=TIGHT_TOL)
        oracle = FloatNet.like(net)
        report = dnn.train(net, data, cfg, rng_for(8))
        oracle_report = dnn.train_float(oracle, data, cfg, rng_for(8))
        for e_net, e_or in zip(report["epochs"][1:], oracle_report["epochs"][1:]):
            assert e_net["loss"] == pytest.approx(e_or["loss"], rel=0.01)

    def test_training_report_structure(self):
        data = small_data(120, 40)
        net = MixedPrecisionNet.build([64, 12, 10], rng_for(9), params=IDEAL,
                                      prog_tol=1e-6)
        oracle = FloatNet.like(net)
        report = dnn.train(net, data, TrainConfig(epochs=2), rng_for(10),
                           oracle=oracle)
        assert len(report["epochs"]) == 2
        for entry in report["epochs"]:
            assert {"loss", "acc", "pulses", "clamps", "oracle_acc"} <= set(entry)


# ---------------------------------------------------------------------------
# Drift inference
# ---------------------------------------------------------------------------

class TestInferWithDrift:
    def deploy(self, params, seed=11):
        data = small_data(200, 80, seed=seed)
        rng = rng_for(seed)
        oracle = FloatNet.build([64, 16, 10], rng)
        dnn.train_float(oracle, data, TrainConfig(epochs=2), rng)
        net = MixedPrecisionNet.from_float(oracle.W, oracle.b, rng, params=params)
        return net, data

    def test_no_drift_curve_is_flat(self):
        params = DeviceParams(prog_noise_rel=0.1, read_noise_rel=0.02, drift_nu=0.0)
        net, data = self.deploy(params)
        curve = dnn.infer_with_drift(net, data[2], data[3],
                                     [1.0, 10.0, 100.0], rng_for(12),
                                     common_noise_seed=123)
        accs = [pt["acc"] for pt in curve]
        assert max(accs) - min(accs) <= 1e-12

    def test_single_point_equals_plain_evaluation(self):
        net, data = self.deploy(IDEAL)
        curve = dnn.infer_with_drift(net, data[2], data[3], [1.0], rng_for())
        plain = dnn.evaluate(lambda x: net.forward(x, rng_for())[0],
                             data[2], data[3])
        assert curve[0]["acc"] == pytest.approx(plain)

    def test_non_increasing_time_points_rejected(self):
        net, data = self.deploy(IDEAL)
        with pytest.raises(ValueError):
            dnn.infer_with_drift(net, data[2], data[3], [10.0, 10.0], rng_for())
