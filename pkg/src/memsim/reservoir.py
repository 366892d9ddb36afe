"""Reservoir computing: echo-state networks with tanh or volatile nodes.

A fixed random recurrent reservoir projects the input stream into a
high-dimensional state trajectory; only a linear readout is trained, in
closed form by ridge regression. Node dynamics are either standard leaky
tanh units or volatile memristive cells whose conductance decays toward
the floor between stimulations (illustrative of physical reservoirs).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import devices
from .devices import DeviceParams


def spectral_radius(w):
    return float(np.max(np.abs(np.linalg.eigvals(w))))


@dataclass
class Reservoir:
    """Fixed random recurrent network; w_in and w_rec never change."""

    n_nodes: int
    w_in: np.ndarray          # (n_nodes, n_inputs)
    w_rec: np.ndarray         # (n_nodes, n_nodes), rescaled to the target radius
    spectral_radius_target: float
    leak_rate: float
    node_kind: str            # "tanh" or "volatile_device"
    volatile_params: DeviceParams = None
    volatile_tau: float = 5.0
    volatile_gain: float = 0.5
    volatile_dt: float = 1.0

    def __post_init__(self):
        if self.node_kind not in ("tanh", "volatile_device"):
            raise ValueError(f"unknown node_kind {self.node_kind!r}")
        if not (0.0 < self.leak_rate <= 1.0):
            raise ValueError("leak_rate must be in (0, 1]")
        if self.spectral_radius_target <= 0:
            raise ValueError("spectral radius target must be positive")
        self.w_in = np.asarray(self.w_in, dtype=float)
        self.w_rec = np.asarray(self.w_rec, dtype=float)
        self.w_in.setflags(write=False)
        self.w_rec.setflags(write=False)

    @classmethod
    def build(cls, n_inputs, n_nodes=200, rho=0.9, leak_rate=0.3,
              connectivity=0.1, input_scale=0.5, rng=None, node_kind="tanh",
              volatile_params=None, volatile_tau=5.0, volatile_gain=0.5,
              volatile_dt=1.0):
        """Random sparse reservoir rescaled to spectral radius rho."""
        if rng is None:
            raise ValueError("an rng is required to build a reservoir")
        w_rec = rng.standard_normal((n_nodes, n_nodes))
        w_rec *= rng.random((n_nodes, n_nodes)) < connectivity
        radius = spectral_radius(w_rec)
        if radius == 0:
            raise ValueError("degenerate recurrent matrix (zero spectral radius)")
        w_rec *= rho / radius
        w_in = input_scale * rng.uniform(-1.0, 1.0, size=(n_nodes, n_inputs))
        if node_kind == "volatile_device" and volatile_params is None:
            volatile_params = devices.IDEAL
        return cls(n_nodes=n_nodes, w_in=w_in, w_rec=w_rec,
                   spectral_radius_target=rho, leak_rate=leak_rate,
                   node_kind=node_kind, volatile_params=volatile_params,
                   volatile_tau=volatile_tau, volatile_gain=volatile_gain,
                   volatile_dt=volatile_dt)

    def zero_state(self):
        return np.zeros(self.n_nodes)


def reservoir_step(res, r, x):
    """Advance the reservoir one step; deterministic."""
    r = np.asarray(r, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if r.shape != (res.n_nodes,):
        raise ValueError(f"state shape {r.shape} does not match n_nodes={res.n_nodes}")
    if x.shape != (res.w_in.shape[1],):
        raise ValueError(f"input shape {x.shape} does not match {res.w_in.shape[1]} inputs")
    drive = res.w_rec @ r + res.w_in @ x
    if res.node_kind == "tanh":
        leak = res.leak_rate
        return (1.0 - leak) * r + leak * np.tanh(drive)
    # volatile nodes: the state is the normalized conductance of a cell
    # driven by |drive| and decaying toward the floor
    p = res.volatile_params
    span = p.g_max - p.g_min
    g = p.g_min + np.clip(r, 0.0, 1.0) * span
    g = devices.volatile_step_array(g, drive, res.volatile_dt, res.volatile_tau,
                                    res.volatile_gain, p)
    return (g - p.g_min) / span


def collect_states(res, inputs, washout):
    """Run from the zero state, discard `washout` steps, stack the rest."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[0] == 1 and res.w_in.shape[1] == 1:
        inputs = inputs.reshape(-1, 1)
    n_steps = inputs.shape[0]
    if washout >= n_steps:
        raise ValueError(f"washout {washout} >= sequence length {n_steps}")
    r = res.zero_state()
    states = np.empty((n_steps - washout, res.n_nodes))
    for t in range(n_steps):
        r = reservoir_step(res, r, inputs[t])
        if t >= washout:
            states[t - washout] = r
    return states


@dataclass
class Readout:
    """Trained linear map from reservoir state (plus bias) to outputs."""

    w_out: np.ndarray     # (n_nodes + 1, n_out)
    ridge_lambda: float

    def __call__(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        S = np.hstack([states, np.ones((states.shape[0], 1))])
        return S @ self.w_out


def fit_readout(states, targets, ridge_lambda=1e-6):
    """Closed-form ridge regression with an appended bias column."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    targets = np.asarray(targets, dtype=float)
    flat = targets.ndim == 1
    if flat:
        targets = targets[:, None]
    if states.shape[0] != targets.shape[0]:
        raise ValueError("row counts of states and targets differ")
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be >= 0")
    S = np.hstack([states, np.ones((states.shape[0], 1))])
    if ridge_lambda == 0:
        if np.linalg.matrix_rank(S) < S.shape[1]:
            warnings.warn("singular system at ridge_lambda = 0; solution is the "
                          "minimum-norm least squares fit, consider lambda > 0")
        w = np.linalg.pinv(S) @ targets
    else:
        A = S.T @ S + ridge_lambda * np.eye(S.shape[1])
        w = np.linalg.solve(A, S.T @ targets)
    return Readout(w_out=w, ridge_lambda=ridge_lambda)


def predict(res, readout, inputs, washout=0):
    """Run the reservoir over `inputs` and apply the readout per step."""
    states = collect_states(res, inputs, washout)
    return readout(states)


def echo_state_distance(res, inputs, r0_a, r0_b):
    """Final state distance of two runs differing only in initial state."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[0] == 1 and res.w_in.shape[1] == 1:
        inputs = inputs.reshape(-1, 1)
    ra, rb = np.asarray(r0_a, dtype=float), np.asarray(r0_b, dtype=float)
    for t in range(inputs.shape[0]):
        ra = reservoir_step(res, ra, inputs[t])
        rb = reservoir_step(res, rb, inputs[t])
    return float(np.linalg.norm(ra - rb))


# ---------------------------------------------------------------------------
# NARMA-10 benchmark
# ---------------------------------------------------------------------------

def narma10(n_steps, rng):
    """Standard NARMA-10 series driven by uniform [0, 0.5] input.

    y[t+1] = 0.3 y[t] + 0.05 y[t] sum_{i=0..9} y[t-i]
             + 1.5 u[t-9] u[t] + 0.1
    """
    u = rng.uniform(0.0, 0.5, size=n_steps)
    y = np.zeros(n_steps)
    for t in range(9, n_steps - 1):
        y[t + 1] = (0.3 * y[t] + 0.05 * y[t] * np.sum(y[t - 9:t + 1])
                    + 1.5 * u[t - 9] * u[t] + 0.1)
    return u, y


def nrmse(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    var = np.var(y_true)
    if var == 0:
        raise ValueError("zero-variance target")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2) / var))


def lagged_linear_baseline(u, y, n_lags, washout, n_train):
    """Ridge fit on raw input lags 0..n_lags-1 (equal lag budget)."""
    T = len(u)
    feats = np.zeros((T, n_lags))
    for k in range(n_lags):
        feats[k:, k] = u[:T - k]
    readout = fit_readout(feats[washout:washout + n_train],
                          y[washout:washout + n_train], ridge_lambda=1e-6)
    pred = readout(feats[washout + n_train:])
    return nrmse(y[washout + n_train:], pred[:, 0])


def run_narma_benchmark(seed, n_nodes=200, rho=0.9, node_kind="tanh",
                        n_steps=3200, washout=200, n_train=2000,
                        ridge_lambda=1e-6, baseline_lags=10, leak_rate=1.0):
    """Train and score a reservoir on NARMA-10 plus the linear baseline.

    NARMA-10 has fast dynamics, so the benchmark runs the reservoir
    without leak smoothing (leak_rate = 1) rather than with the
    general-purpose default.
    """
    from .rng import substream

    rng = substream(seed, "reservoir", "narma10")
    u, y = narma10(n_steps, rng)
    res = Reservoir.build(1, n_nodes=n_nodes, rho=rho, rng=rng, node_kind=node_kind,
                          leak_rate=leak_rate)
    states = collect_states(res, u.reshape(-1, 1), washout)
    readout = fit_readout(states[:n_train], y[washout:washout + n_train],
                          ridge_lambda=ridge_lambda)
    pred = readout(states[n_train:])
    test_nrmse = nrmse(y[washout + n_train:], pred[:, 0])
    baseline = lagged_linear_baseline(u, y, baseline_lags, washout, n_train)
    return {"test_nrmse": test_nrmse, "linear_baseline_nrmse": baseline,
            "n_nodes": n_nodes, "rho": rho, "node_kind": node_kind}
