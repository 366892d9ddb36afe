"""Echo-state reservoirs, ridge readouts, and the NARMA-10 benchmark."""

import numpy as np
import pytest

from memsim import reservoir
from memsim.devices import DeviceParams
from memsim.reservoir import (
    Readout, Reservoir, collect_states, echo_state_distance, fit_readout,
    lagged_linear_baseline, narma10, nrmse, predict, reservoir_step,
    run_narma_benchmark, spectral_radius,
)

IDEAL = DeviceParams(prog_noise_rel=0.0, read_noise_rel=0.0, drift_nu=0.0)


def rng_for(seed=0):
    return np.random.default_rng(seed)


def zero_recurrence_reservoir(n_inputs=1, n_nodes=4, leak=1.0, rng=None):
    rng = rng or rng_for(0)
    return Reservoir(n_nodes=n_nodes,
                     w_in=0.5 * rng.uniform(-1, 1, (n_nodes, n_inputs)),
                     w_rec=np.zeros((n_nodes, n_nodes)),
                     spectral_radius_target=0.9, leak_rate=leak,
                     node_kind="tanh")


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

class TestBuild:
    def test_spectral_radius_hits_target(self):
        for rho in (0.5, 0.9, 1.5):
            res = Reservoir.build(1, n_nodes=80, rho=rho, rng=rng_for(1))
            assert spectral_radius(res.w_rec) == pytest.approx(rho, abs=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            Reservoir.build(1, rng=None)
        with pytest.raises(ValueError):
            Reservoir.build(1, n_nodes=10, leak_rate=0.0, rng=rng_for())
        with pytest.raises(ValueError):
            Reservoir.build(1, n_nodes=10, node_kind="quantum", rng=rng_for())

    def test_weights_immutable(self):
        res = Reservoir.build(1, n_nodes=10, rng=rng_for(2))
        with pytest.raises(ValueError):
            res.w_rec[0, 0] = 1.0
        with pytest.raises(ValueError):
            res.w_in[0, 0] = 1.0


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

class TestStep:
    def test_zero_fixed_point(self):
        res = Reservoir.build(1, n_nodes=10, rng=rng_for(3))
        r = reservoir_step(res, np.zeros(10), np.zeros(1))
        assert np.allclose(r, 0.0)

    def test_contraction_below_unit_radius(self):
        res = Reservoir.build(1, n_nodes=50, rho=0.9, leak_rate=1.0,
                              rng=rng_for(4))
        r = rng_for(5).uniform(-1, 1, 50)
        norm0 = np.linalg.norm(r)
        for _ in range(200):
            r = reservoir_step(res, r, np.zeros(1))
        assert np.linalg.norm(r) < 1e-3 * norm0

    def test_memoryless_when_leak_one_no_recurrence(self):
        res = zero_recurrence_reservoir()
        x = np.array([0.7])
        r = reservoir_step(res, rng_for(6).uniform(-1, 1, 4), x)
        assert np.allclose(r, np.tanh(res.w_in @ x))

    def test_shape_validation(self):
        res = Reservoir.build(2, n_nodes=10, rng=rng_for(7))
        with pytest.raises(ValueError):
            reservoir_step(res, np.zeros(9), np.zeros(2))
        with pytest.raises(ValueError):
            reservoir_step(res, np.zeros(10), np.zeros(3))

    def test_volatile_nodes_stay_normalized(self):
        res = Reservoir.build(1, n_nodes=20, rng=rng_for(8),
                              node_kind="volatile_device",
                              volatile_params=IDEAL)
        r = res.zero_state()
        for t in range(50):
            r = reservoir_step(res, r, np.array([np.sin(0.3 * t)]))
            assert np.all((r >= 0.0) & (r <= 1.0))
        assert np.any(r > 0.0)


class TestCollectStates:
    def test_washout_to_single_row(self):
        res = Reservoir.build(1, n_nodes=10, connectivity=0.5, rng=rng_for(9))
        states = collect_states(res, np.ones((5, 1)), washout=4)
        assert states.shape == (1, 10)

    def test_zero_input_zero_states(self):
        res = Reservoir.build(1, n_nodes=10, rng=rng_for(10))
        states = collect_states(res, np.zeros((20, 1)), washout=0)
        assert np.allclose(states, 0.0)

    def test_deterministic(self):
        res = Reservoir.build(1, n_nodes=10, rng=rng_for(11))
        u = rng_for(12).uniform(0, 1, (30, 1))
        assert np.array_equal(collect_states(res, u, 5),
                              collect_states(res, u, 5))

    def test_washout_bound(self):
        res = Reservoir.build(1, n_nodes=10, rng=rng_for(13))
        with pytest.raises(ValueError):
            collect_states(res, np.ones((5, 1)), washout=5)


# ---------------------------------------------------------------------------
# Readout
# ---------------------------------------------------------------------------

class TestReadout:
    def test_zero_targets_zero_weights(self):
        S = rng_for(14).standard_normal((30, 6))
        ro = fit_readout(S, np.zeros(30), ridge_lambda=1e-6)
        assert np.allclose(ro.w_out, 0.0, atol=1e-9)

    def test_realizable_targets_recovered(self):
        rng = rng_for(15)
        S = rng.standard_normal((60, 8))
        w_star = rng.standard_normal(8)
        targets = S @ w_star + 0.3
        ro = fit_readout(S, targets, ridge_lambda=0.0)
        resid = ro(S)[:, 0] - targets
        assert np.sqrt(np.mean(resid ** 2)) <= 1e-8

    def test_ridge_shrinkage_monotone(self):
        rng = rng_for(16)
        S = rng.standard_normal((60, 8))
        targets = rng.standard_normal(60)
        norms = [np.linalg.norm(fit_readout(S, targets, lam).w_out)
                 for lam in (1.0, 10.0, 100.0)]
        assert norms[0] > norms[1] > norms[2]

    def test_singular_system_warns(self):
        S = np.zeros((10, 4))
        with pytest.warns(UserWarning, match="singular"):
            fit_readout(S, np.zeros(10), ridge_lambda=0.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_readout(np.zeros((4, 2)), np.zeros(5))
        with pytest.raises(ValueError):
            fit_readout(np.zeros((4, 2)), np.zeros(4), ridge_lambda=-1.0)

    def test_local_optimality_spot_check(self):
        rng = rng_for(17)
        S = rng.standard_normal((50, 6))
        targets = rng.standard_normal(50)
        lam = 0.1
        ro = fit_readout(S, targets, lam)

        def ridge_loss(w):
            Sb = np.hstack([S, np.ones((50, 1))])
            r = Sb @ w - targets[:, None]
            return float(np.sum(r ** 2) + lam * np.sum(w ** 2))

        best = ridge_loss(ro.w_out)
        for _ in range(100):
            assert best <= ridge_loss(ro.w_out +
                                      0.01 * rng.standard_normal(ro.w_out.shape))

    def test_predict_constant_zero_input_gives_bias(self):
        res = Reservoir.build(1, n_nodes=10, rng=rng_for(18))
        ro = Readout(w_out=np.vstack([np.zeros((10, 1)), [[2.5]]]),
                     ridge_lambda=0.0)
        out = predict(res, ro, np.zeros((6, 1)))
        assert np.allclose(out, 2.5)


# ---------------------------------------------------------------------------
# Echo-state property
# ---------------------------------------------------------------------------

class TestEchoState:
    def test_fading_memory_below_unit_radius(self):
        res = Reservoir.build(1, n_nodes=60, rho=0.9, leak_rate=1.0,
                              rng=rng_for(19))
        u = rng_for(20).uniform(0, 0.5, (500, 1))
        rng = rng_for(21)
        d = echo_state_distance(res, u, rng.uniform(-1, 1, 60),
                                rng.uniform(-1, 1, 60))
        assert d < 1e-6


# ---------------------------------------------------------------------------
# NARMA-10 benchmark
# ---------------------------------------------------------------------------

class TestNarma:
    def test_recurrence_spot_check(self):
        u, y = narma10(200, rng_for(22))
        for t in range(9, 150):
            expected = (0.3 * y[t] + 0.05 * y[t] * np.sum(y[t - 9:t + 1])
                        + 1.5 * u[t - 9] * u[t] + 0.1)
            assert y[t + 1] == pytest.approx(expected, rel=1e-12)

    def test_nrmse_validation_and_exact_prediction(self):
        y = rng_for(23).standard_normal(50)
        assert nrmse(y, y) == 0.0
        with pytest.raises(ValueError):
            nrmse(np.ones(10), np.zeros(10))

    def test_benchmark_beats_linear_baseline(self):
        result = run_narma_benchmark(seed=0)
        assert result["test_nrmse"] < 0.5
        assert result["test_nrmse"] < result["linear_baseline_nrmse"]

    def test_volatile_benchmark_reports_finite_error(self):
        result = run_narma_benchmark(seed=0, n_nodes=60,
                                     node_kind="volatile_device", n_steps=1200,
                                     washout=100, n_train=800)
        assert np.isfinite(result["test_nrmse"])
