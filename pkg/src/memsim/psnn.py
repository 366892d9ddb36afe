"""Probabilistic (GLM) spiking networks.

Each unit fires as a Bernoulli draw of a sigmoid applied to its membrane
potential, which is a causal filtered sum of past fan-in and own spikes.
Because the firing probabilities are differentiable in the parameters,
the networks train with the score-function (REINFORCE) estimator: a
global feedback signal multiplied by locally accumulated eligibility
traces. Tiny networks additionally support exhaustive enumeration of the
output space, giving exact expectations and gradients for oracles.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import snn

DEFAULT_SYN_KERNEL = tuple(0.6 ** k for k in range(5))
DEFAULT_REFR_KERNEL = (-2.0,)


def sigmoid(u):
    return 1.0 / (1.0 + np.exp(-np.clip(u, -500, 500)))


def _filtered(raster, kernel):
    """Causal convolution: out[:, t] = sum_k kernel[k-1] * raster[:, t-k].

    Taps apply to lags 1..K, so a spike influences the membrane starting
    one step after it occurs.
    """
    raster = np.asarray(raster, dtype=float)
    out = np.zeros_like(raster)
    for k, tap in enumerate(kernel, start=1):
        if k < raster.shape[1]:
            out[:, k:] += tap * raster[:, :-k]
    return out


@dataclass
class GlmNetwork:
    """Feedforward GLM spiking network.

    Internal units are the hidden units followed by the output units;
    sources are the input channels followed by the internal units. The
    connectivity mask wires hidden units to the inputs and output units
    to the hidden layer (or directly to the inputs when n_hidden = 0).
    """

    n_in: int
    n_out: int
    n_hidden: int
    weights: np.ndarray     # (n_units, n_sources)
    biases: np.ndarray      # (n_units,)
    mask: np.ndarray        # same shape as weights, entries in {0, 1}
    syn_kernel: np.ndarray
    refr_kernel: np.ndarray
    t_steps: int

    @property
    def n_units(self):
        return self.n_hidden + self.n_out

    @property
    def n_sources(self):
        return self.n_in + self.n_units

    @classmethod
    def build(cls, n_in, n_out, t_steps, n_hidden=0, rng=None, w_scale=0.5,
              syn_kernel=DEFAULT_SYN_KERNEL, refr_kernel=DEFAULT_REFR_KERNEL):
        if n_in < 1 or n_out < 1 or n_hidden < 0 or t_steps < 1:
            raise ValueError("unit counts must be positive (n_hidden >= 0)")
        n_units = n_hidden + n_out
        n_sources = n_in + n_units
        mask = np.zeros((n_units, n_sources))
        if n_hidden > 0:
            mask[:n_hidden, :n_in] = 1.0
            mask[n_hidden:, n_in:n_in + n_hidden] = 1.0
        else:
            mask[:, :n_in] = 1.0
        if rng is None:
            weights = np.zeros((n_units, n_sources))
        else:
            weights = w_scale * rng.standard_normal((n_units, n_sources)) * mask
        return cls(n_in=n_in, n_out=n_out, n_hidden=n_hidden,
                   weights=weights, biases=np.zeros(n_units), mask=mask,
                   syn_kernel=np.asarray(syn_kernel, dtype=float),
                   refr_kernel=np.asarray(refr_kernel, dtype=float),
                   t_steps=t_steps)

    def output_slice(self):
        return slice(self.n_hidden, self.n_units)


@dataclass
class Eligibility:
    """Accumulated score-function trace, shape-mirroring the parameters."""

    d_weights: np.ndarray
    d_biases: np.ndarray

    def __iadd__(self, other):
        self.d_weights += other.d_weights
        self.d_biases += other.d_biases
        return self

    def scaled(self, c):
        return Eligibility(self.d_weights * c, self.d_biases * c)


@dataclass
class LossSignal:
    """Global feedback f(X, Y) with an optional control-variate baseline."""

    f_value: float
    baseline: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.f_value) and np.isfinite(self.baseline)):
            raise ValueError("loss signal must be finite")


def _check_input(net, input_raster):
    X = np.asarray(input_raster)
    if X.shape != (net.n_in, net.t_steps):
        raise ValueError(
            f"input raster shape {X.shape} does not match ({net.n_in}, {net.t_steps})"
        )
    return X.astype(float)


def membranes(net, input_raster, internal_raster):
    """Membrane potentials for all units over all steps, teacher-forced.

    u[i, t] = b[i] + sum_j w[i, j] * (syn_kernel (*) s_j)(t)
            + (refr_kernel (*) s_i)(t)
    with causal filters over past spikes only.
    """
    X = _check_input(net, input_raster)
    Y = np.asarray(internal_raster, dtype=float)
    if Y.shape != (net.n_units, net.t_steps):
        raise ValueError("internal raster shape mismatch")
    sources = np.vstack([X, Y])
    f_syn = _filtered(sources, net.syn_kernel)
    f_refr = _filtered(Y, net.refr_kernel)
    u = net.biases[:, None] + (net.weights * net.mask) @ f_syn + f_refr
    return u, f_syn


def membrane(net, unit, t, input_raster, own_raster):
    """Scalar membrane potential of one unit at one step."""
    if not (0 <= unit < net.n_units):
        raise IndexError(f"unit {unit} out of range")
    if not (0 <= t < net.t_steps):
        raise IndexError(f"step {t} out of range")
    u, _ = membranes(net, input_raster, own_raster)
    return float(u[unit, t])


def log_prob_and_eligibility(net, input_raster, internal_raster):
    """Bernoulli log-likelihood of a spike raster and its exact gradient.

    The per-step score is (y - sigma(u)); multiplied by the local
    regressors it yields the eligibility trace of the REINFORCE
    estimator.
    """
    Y = np.asarray(internal_raster, dtype=float)
    u, f_syn = membranes(net, input_raster, Y)
    # log sigma(u) = -log(1 + e^{-u}); log(1 - sigma(u)) = -log(1 + e^{u})
    log_p = float(np.sum(-Y * np.logaddexp(0.0, -u) - (1.0 - Y) * np.logaddexp(0.0, u)))
    d = Y - sigmoid(u)
    elig = Eligibility(d_weights=(d @ f_syn.T) * net.mask, d_biases=d.sum(axis=1))
    return log_p, elig


def rollout(net, input_raster, rng):
    """Sample a spike raster; return (output raster, log_prob, eligibility)."""
    X = _check_input(net, input_raster)
    n, T = net.n_units, net.t_steps
    Y = np.zeros((n, T))
    sources = np.vstack([X, Y])
    w = net.weights * net.mask
    ka, kb = len(net.syn_kernel), len(net.refr_kernel)
    for t in range(T):
        f_syn = np.zeros(net.n_sources)
        for k in range(1, min(ka, t) + 1):
            f_syn += net.syn_kernel[k - 1] * sources[:, t - k]
        f_refr = np.zeros(n)
        for k in range(1, min(kb, t) + 1):
            f_refr += net.refr_kernel[k - 1] * Y[:, t - k]
        u = net.biases + w @ f_syn + f_refr
        spikes = (rng.random(n) < sigmoid(u)).astype(float)
        Y[:, t] = spikes
        sources[net.n_in:, t] = spikes
    log_p, elig = log_prob_and_eligibility(net, X, Y)
    return Y[net.output_slice()].copy(), log_p, elig, Y


def enumerate_rasters(net, input_raster, max_bits=20):
    """All internal rasters with their probabilities (tiny nets only)."""
    bits = net.n_units * net.t_steps
    if bits > max_bits:
        raise ValueError(f"output space 2^{bits} too large to enumerate")
    out = []
    for combo in product((0.0, 1.0), repeat=bits):
        Y = np.array(combo).reshape(net.n_units, net.t_steps)
        log_p, elig = log_prob_and_eligibility(net, input_raster, Y)
        out.append((Y, np.exp(log_p), elig))
    return out


def exact_loss_and_grad(net, input_raster, f):
    """Enumeration oracle: E_Y[f] and its exact parameter gradient.

    grad E[f] = sum_Y P(Y) f(Y) grad log P(Y).
    """
    total = 0.0
    gw = np.zeros_like(net.weights)
    gb = np.zeros_like(net.biases)
    for Y, p, elig in enumerate_rasters(net, input_raster):
        fv = float(f(input_raster, Y[net.output_slice()]))
        total += p * fv
        gw += p * fv * elig.d_weights
        gb += p * fv * elig.d_biases
    return total, Eligibility(gw, gb)


# ---------------------------------------------------------------------------
# REINFORCE training
# ---------------------------------------------------------------------------

@dataclass
class RunningBaseline:
    """Running-mean control variate for the feedback signal."""

    momentum: float = 0.9
    value: float = 0.0
    initialized: bool = False

    def update(self, f):
        if not self.initialized:
            self.value = f
            self.initialized = True
        else:
            self.value = self.momentum * self.value + (1.0 - self.momentum) * f
        return self.value


def reinforce_step(net, batch, lr, rng, baseline=None):
    """One score-function update over a batch of (input, loss fn) pairs.

    Per sample: rollout, evaluate the global feedback f(X, Y), and
    accumulate (f - b) * eligibility; the averaged estimate descends the
    expected loss. Mutates and returns the network. Returns (net, mean_f).
    """
    if lr < 0:
        raise ValueError("lr must be non-negative")
    if not batch:
        raise ValueError("empty batch")
    gw = np.zeros_like(net.weights)
    gb = np.zeros_like(net.biases)
    fs = []
    for X, f in batch:
        y_out, _, elig, _ = rollout(net, X, rng)
        fv = float(f(X, y_out))
        if not np.isfinite(fv):
            raise ValueError("non-finite feedback signal")
        b = baseline.value if (baseline is not None and baseline.initialized) else 0.0
        adv = fv - b
        gw += adv * elig.d_weights
        gb += adv * elig.d_biases
        if baseline is not None:
            baseline.update(fv)
        fs.append(fv)
    net.weights -= lr * gw / len(batch)
    net.biases -= lr * gb / len(batch)
    return net, float(np.mean(fs))


def hamming_loss(target):
    """Per-sample feedback: count of mismatched raster entries."""
    target = np.asarray(target, dtype=float)

    def f(X, y_out):
        return float(np.sum(np.abs(y_out - target)))

    return f


def van_rossum_loss(target, tau=3.0):
    """Squared distance between exponentially filtered spike trains."""
    target = np.asarray(target, dtype=float)
    decay = np.exp(-1.0 / tau)

    def filt(r):
        out = np.zeros_like(r, dtype=float)
        acc = np.zeros(r.shape[0])
        for t in range(r.shape[1]):
            acc = decay * acc + r[:, t]
            out[:, t] = acc
        return out

    ft = filt(target)

    def f(X, y_out):
        return float(np.sum((filt(np.asarray(y_out, dtype=float)) - ft) ** 2))

    return f


@dataclass
class PsnnTrainConfig:
    lr: float = 0.05
    epochs: int = 100
    loss: str = "hamming"        # or "van_rossum"
    baseline_mode: str = "running_mean"   # or "none"
    seed: int = 0


@dataclass
class TrainReport:
    loss_curve: list = field(default_factory=list)
    output_spikes_per_sample: float = 0.0
    input_spikes_per_sample: float = 0.0


def train_supervised(net, dataset, cfg, rng):
    """REINFORCE training toward per-sample target rasters.

    `dataset` is a list of (input raster, target output raster) pairs;
    the global feedback is the configured readout distance. Returns a
    report with the per-epoch mean feedback and spike statistics.
    """
    if not dataset:
        raise ValueError("empty dataset")
    loss_fns = {"hamming": hamming_loss, "van_rossum": van_rossum_loss}
    if cfg.loss not in loss_fns:
        raise ValueError(f"unknown loss {cfg.loss!r}; valid: {sorted(loss_fns)}")
    make_f = loss_fns[cfg.loss]
    batch = [(X, make_f(tgt)) for X, tgt in dataset]
    baseline = RunningBaseline() if cfg.baseline_mode == "running_mean" else None
    report = TrainReport()
    for _ in range(cfg.epochs):
        net, mean_f = reinforce_step(net, batch, cfg.lr, rng, baseline=baseline)
        report.loss_curve.append(mean_f)
    spikes = [rollout(net, X, rng)[0].sum() for X, _ in dataset]
    report.output_spikes_per_sample = float(np.mean(spikes))
    report.input_spikes_per_sample = float(np.mean([np.sum(X) for X, _ in dataset]))
    return report


# ---------------------------------------------------------------------------
# Bundled temporal task: rate vs GRF time encoding
# ---------------------------------------------------------------------------

MISS_WEIGHT = 4.0   # false-negative cost of the task loss


def make_encoding_task(n_samples, rng, n_segments=6, n_fields=10, delta_t=8,
                       sigma_field=0.12, mean_lo=0.45, mean_hi=0.55, walk=0.01):
    """Two-class discrimination over short analog value sequences.

    Each sample is a slow random walk around its class mean; the network
    must report the class on the last two steps of every value window
    (spike for class 1, stay silent for class 0) and stay silent
    elsewhere. Misses cost MISS_WEIGHT times a false alarm so that the
    all-silent policy is not a REINFORCE fixed point. Returns
    (samples, meta) where each sample is (values, label, target raster).
    """
    t_steps = n_segments * delta_t
    decision = np.zeros(t_steps, dtype=bool)
    for s in range(n_segments):
        decision[s * delta_t + delta_t - 2: s * delta_t + delta_t] = True
    samples = []
    for _ in range(n_samples):
        label = int(rng.random() < 0.5)
        mean = mean_hi if label else mean_lo
        vals = np.clip(mean + np.cumsum(walk * rng.standard_normal(n_segments)), 0.0, 1.0)
        target = np.zeros((1, t_steps))
        target[0, decision] = label
        samples.append((vals, label, target))
    meta = {"n_fields": n_fields, "delta_t": delta_t, "sigma_field": sigma_field,
            "t_steps": t_steps, "decision": decision}
    return samples, meta


def weighted_hamming_loss(target, miss_weight=MISS_WEIGHT):
    """Raster distance with asymmetric miss cost."""
    target = np.asarray(target, dtype=float)

    def f(X, y_out):
        y = np.asarray(y_out, dtype=float)
        misses = np.sum((target > 0.5) & (y < 0.5))
        false_alarms = np.sum((target < 0.5) & (y > 0.5))
        return float(miss_weight * misses + false_alarms)

    return f


def expected_weighted_hamming(net, X, target, miss_weight=MISS_WEIGHT):
    """Closed-form expected task loss of a 1-layer net on one sample.

    Uses the no-feedback membrane (refractory history zeroed), which is
    exact for the first spike of each decision window and a close upper
    bound elsewhere; identical treatment for every encoder.
    """
    u, _ = membranes(net, X, np.zeros((net.n_units, net.t_steps)))
    p = sigmoid(u)
    target = np.asarray(target, dtype=float)
    return float(np.sum(np.where(target > 0.5, miss_weight * (1.0 - p), p)))


def encode_task_sample(vals, meta, encoder, rng):
    """Encode one value sequence with the chosen scheme.

    Both schemes drive the same n_fields channels by the Gaussian
    receptive-field responses of the values, so they carry the same
    analog information: `rate` draws Bernoulli spikes at the response
    rate on every step of a value's window, `grf` places one latency-
    coded spike per responsive field per window.
    """
    n_fields, delta_t = meta["n_fields"], meta["delta_t"]
    if encoder == "grf":
        return snn.encode_grf(vals, n_fields, delta_t, meta["sigma_field"]).events
    if encoder == "rate":
        centers = np.arange(n_fields) / (n_fields - 1)
        events = np.zeros((n_fields, len(vals) * delta_t), dtype=np.uint8)
        for s, v in enumerate(vals):
            resp = np.exp(-((v - centers) ** 2) / (2.0 * meta["sigma_field"] ** 2))
            win = snn.encode_rate(resp, delta_t, rng).events
            events[:, s * delta_t:(s + 1) * delta_t] = win
        return events
    raise ValueError(f"unknown encoder {encoder!r}")


def run_encoding_comparison(seed, n_train=24, n_test=40, epochs=150, lr=0.01):
    """Train the same 1-layer GLM on rate- vs GRF-encoded inputs.

    Both encoders see the same task distribution; the reported final
    loss is the expected task loss on a held-out test set, normalized
    per time step, so neither encoder can profit from memorizing its own
    spike-sampling noise. Returns a dict per encoder with the final loss
    and the mean input spikes per sample.
    """
    from .rng import substream

    results = {}
    for encoder in ("rate", "grf"):
        rng = substream(seed, "psnn", "encoding", encoder)
        train, meta = make_encoding_task(n_train, rng)
        test, _ = make_encoding_task(n_test, rng)
        T = meta["t_steps"]
        taps = tuple(0.8 ** k for k in range(meta["delta_t"]))
        batch = [(encode_task_sample(v, meta, encoder, rng), weighted_hamming_loss(t))
                 for v, _, t in train]
        net = GlmNetwork.build(meta["n_fields"], 1, T, rng=rng, w_scale=0.1,
                               syn_kernel=taps)
        baseline = RunningBaseline()
        curve = []
        for _ in range(epochs):
            net, mean_f = reinforce_step(net, batch, lr, rng, baseline=baseline)
            curve.append(mean_f)
        test_enc = [(encode_task_sample(v, meta, encoder, rng), t) for v, _, t in test]
        final = np.mean([expected_weighted_hamming(net, X, t) for X, t in test_enc]) / T
        results[encoder] = {
            "final_loss": float(final),
            "input_spikes_per_sample": float(np.mean([X.sum() for X, _ in test_enc])),
            "loss_curve": curve,
        }
    return results
