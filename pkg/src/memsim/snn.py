"""Deterministic spiking networks on memristive synapses.

Covers the LIF neuron, rate and Gaussian-receptive-field spike encoders,
the simplified rectangular STDP rule, synapses built from several
devices that are read jointly but programmed one at a time through a
shared round-robin arbiter, the temporal-correlation detection
experiment, and the add-versus-multiply efficiency inequality.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import devices
from .devices import DeviceParams, DeviceState, Polarity, Pulse

GRF_CUTOFF = 0.05


@dataclass
class SpikeRaster:
    """Binary spike events for a population over discrete time."""

    events: np.ndarray  # (n_units, n_steps), values in {0, 1}
    dt: float = 1e-3

    def __post_init__(self):
        self.events = np.asarray(self.events)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.isin(self.events, (0, 1)).all():
            raise ValueError("raster entries must be 0 or 1")

    @property
    def n_units(self):
        return self.events.shape[0]

    @property
    def n_steps(self):
        return self.events.shape[1]

    def spike_count(self):
        return int(self.events.sum())


@dataclass
class LifNeuron:
    v: float = 0.0
    v_thresh: float = 1.0
    v_reset: float = 0.0
    leak_lambda: float = 0.9

    def __post_init__(self):
        if not (0.0 <= self.leak_lambda < 1.0):
            raise ValueError("leak_lambda must be in [0, 1)")
        if self.v_reset >= self.v_thresh:
            raise ValueError("v_reset must be below v_thresh")


def lif_step(neuron, input_current):
    """Leaky integration; spike-and-reset at threshold (>= convention)."""
    v = neuron.leak_lambda * neuron.v + input_current
    if v >= neuron.v_thresh:
        return replace(neuron, v=neuron.v_reset), True
    return replace(neuron, v=v), False


def lif_run(neuron, currents):
    """Run a current sequence; returns (neuron, spike array)."""
    spikes = np.zeros(len(currents), dtype=np.uint8)
    for t, i_t in enumerate(currents):
        neuron, spiked = lif_step(neuron, i_t)
        spikes[t] = spiked
    return neuron, spikes


# ---------------------------------------------------------------------------
# Spike encoders
# ---------------------------------------------------------------------------

def encode_rate(values, t_steps, rng, dt=1e-3):
    """Independent Bernoulli(value) per channel per step."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("rate-encoded values must lie in [0, 1]")
    events = (rng.random((values.size, t_steps)) < values[:, None]).astype(np.uint8)
    return SpikeRaster(events=events, dt=dt)


def encode_grf(values, n_fields, delta_t, sigma_field, dt=1e-3):
    """Latency coding through Gaussian receptive fields.

    Field i is centered at i/(n_fields-1); its response r to the value
    places a single spike at step round((1-r)*(delta_t-1)) inside that
    value's window of delta_t steps. Responses below the cutoff emit no
    spike. Values are laid out in consecutive windows; pure function.
    """
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("encoded values must lie in [0, 1]")
    if n_fields < 2:
        raise ValueError("n_fields must be >= 2")
    if delta_t < 1:
        raise ValueError("delta_t must be >= 1")
    centers = np.arange(n_fields) / (n_fields - 1)
    events = np.zeros((n_fields, values.size * delta_t), dtype=np.uint8)
    for s, v in enumerate(values):
        resp = np.exp(-((v - centers) ** 2) / (2.0 * sigma_field ** 2))
        steps = np.round((1.0 - resp) * (delta_t - 1)).astype(int)
        for i in range(n_fields):
            if resp[i] >= GRF_CUTOFF:
                events[i, s * delta_t + steps[i]] = 1
    return SpikeRaster(events=events, dt=dt)


# ---------------------------------------------------------------------------
# Multi-memristive synapses
# ---------------------------------------------------------------------------

class Arbiter:
    """Round-robin device selector shared across a synapse population."""

    def __init__(self, n_devices):
        if n_devices < 1:
            raise ValueError("need at least one device per synapse")
        self.n_devices = n_devices
        self.counter = 0

    def next(self):
        sel = self.counter
        self.counter = (self.counter + 1) % self.n_devices
        return sel


@dataclass
class MultiMemristiveSynapse:
    devices: list
    arbiter: Arbiter

    @classmethod
    def create(cls, n_devices, arbiter=None, params=None, g0=None, t0=0.0):
        params = params if params is not None else DeviceParams()
        g0 = g0 if g0 is not None else params.g_min
        arb = arbiter if arbiter is not None else Arbiter(n_devices)
        cells = [DeviceState(g0, t0, params) for _ in range(n_devices)]
        return cls(devices=cells, arbiter=arb)


def synapse_read(synapse, now, rng):
    """Joint read: all devices contribute during spike transmission."""
    return sum(devices.read(d, now, rng) for d in synapse.devices)


def synapse_program(synapse, direction, pulses, now, rng):
    """Program only the arbiter-selected device."""
    if pulses < 1:
        raise ValueError("pulses must be >= 1")
    sel = synapse.arbiter.next()
    pol = Polarity.SET if direction == "potentiate" else Polarity.RESET
    synapse.devices[sel] = devices.apply_pulse(
        synapse.devices[sel], Pulse(pol, pulses), now, rng
    )
    return synapse


@dataclass
class StdpRule:
    """Rectangular pairing windows with fixed pulse counts."""

    window_steps: int = 5
    dw_plus: int = 1
    dw_minus: int = 1

    def __post_init__(self):
        if self.window_steps < 1:
            raise ValueError("window_steps must be >= 1")
        if self.dw_plus < 0 or self.dw_minus < 0:
            raise ValueError("pulse magnitudes must be >= 0")


def stdp_update(rule, pre_raster, post_raster, t, synapse, now, rng):
    """Apply the simplified rule at step t.

    A post spike with any pre spike in the preceding window potentiates;
    a pre spike with no post spike within the window on either side
    depresses (the lookahead keeps an isolated pre-before-post pairing
    from depressing at the pre-spike step).
    """
    pre = pre_raster.events[0] if pre_raster.events.ndim == 2 else pre_raster.events
    post = post_raster.events[0] if post_raster.events.ndim == 2 else post_raster.events
    if not (0 <= t < len(pre)):
        raise ValueError("t outside raster range")
    lo = max(0, t - rule.window_steps + 1)
    hi = min(len(post), t + rule.window_steps)
    if post[t] and pre[lo: t + 1].any():
        if rule.dw_plus > 0:
            synapse_program(synapse, "potentiate", rule.dw_plus, now, rng)
    elif pre[t] and not post[lo: hi].any():
        if rule.dw_minus > 0:
            synapse_program(synapse, "depress", rule.dw_minus, now, rng)
    return synapse


# ---------------------------------------------------------------------------
# Correlated spike-train generation
# ---------------------------------------------------------------------------

def correlated_poisson(n_trains, n_steps, rate, corr_c, rng):
    """Binary trains with common rate and pairwise correlation ~corr_c.

    Common-ancestor thinning: a shared master train of rate `rate` is
    copied into each train with probability sqrt(corr_c); independent
    fill spikes restore the marginal rate.
    """
    if not (0.0 <= corr_c <= 1.0):
        raise ValueError("corr_c must lie in [0, 1]")
    root = np.sqrt(corr_c)
    master = rng.random(n_steps) < rate
    copied = master[None, :] & (rng.random((n_trains, n_steps)) < root)
    p_fill = rate * (1.0 - root) / max(1.0 - rate * root, 1e-12)
    fill = rng.random((n_trains, n_steps)) < p_fill
    return (copied | (~copied & fill)).astype(np.uint8)


# ---------------------------------------------------------------------------
# Correlation-detection experiment (array-level implementation)
# ---------------------------------------------------------------------------

@dataclass
class SeparationReport:
    mean_corr: float
    mean_unc: float
    std_corr: float
    std_unc: float
    separation: float
    n_per_synapse: int
    post_spike_count: int
    hist_corr: list = field(default_factory=list)
    hist_unc: list = field(default_factory=list)


# Device profiles for the correlation experiment. The small SET step
# keeps the accumulative staircase near-linear over the run so the
# noiseless N=1 and N=7 trajectories stay equivalent; the noisy profile
# adds per-pulse programming noise and read noise on the summed-weight
# measurement, which multi-device synapses average down.
EXPERIMENT_DEVICE = DeviceParams(set_step_fraction=0.00025, prog_noise_rel=0.0,
                                 read_noise_rel=0.0, drift_nu=0.0)
EXPERIMENT_DEVICE_NOISY = replace(EXPERIMENT_DEVICE, prog_noise_rel=0.1,
                                  read_noise_rel=0.05)


def correlation_experiment(n_synapses=1000, frac_correlated=0.1, n_per_synapse=1,
                           rate=0.02, corr_c=0.75, steps=5000, params=None,
                           seed=0, rule=None, v_thresh=None, leak_lambda=0.0,
                           g0_fraction=0.0, homeostasis_eta=0.02):
    """One LIF neuron fed by a population of multi-device synapses.

    A fraction of the synapses receives correlated Poisson input; STDP
    drives their weights apart from the uncorrelated rest. Synapse state
    is held in (n_synapses, n_per_synapse) conductance arrays, with the
    population-wide round-robin arbiter selecting one device per
    programming event. Returns per-group statistics and the separation
    score (mu_c - mu_u)/sqrt(var_c + var_u).
    """
    if not (0.0 < frac_correlated < 1.0):
        raise ValueError("frac_correlated must lie in (0, 1)")
    params = params if params is not None else EXPERIMENT_DEVICE
    # abrupt RESET depression would erase a single-device synapse outright,
    # so the experiment runs potentiation-dominated by default
    rule = rule if rule is not None else StdpRule(window_steps=5, dw_plus=1, dw_minus=0)
    rng = np.random.default_rng(seed)

    n_corr = int(round(n_synapses * frac_correlated))
    pre = np.zeros((n_synapses, steps), dtype=np.uint8)
    pre[:n_corr] = correlated_poisson(n_corr, steps, rate, corr_c, rng)
    pre[n_corr:] = (rng.random((n_synapses - n_corr, steps)) < rate).astype(np.uint8)

    span = params.g_max - params.g_min
    g0 = params.g_min + g0_fraction * span
    g = np.full((n_synapses, n_per_synapse), g0)
    t_prog = np.zeros((n_synapses, n_per_synapse))
    arbiter_counter = 0

    # coincidence-detector threshold: above the background drive, below
    # the drive of a shared (master) spike hitting the correlated group;
    # a slow homeostat keeps the firing rate near the master-event rate
    # as potentiation raises the overall drive
    if v_thresh is None:
        v_thresh = (max(g0, params.g_min) / span) * (
            n_synapses * rate + 0.4 * n_corr * np.sqrt(corr_c)
        )
    target_rate = 0.9 * rate
    neuron_v = 0.0
    post = np.zeros(steps, dtype=np.uint8)
    w = rule.window_steps
    dt_step = 1e-3

    for t in range(steps):
        now = t * dt_step
        active = pre[:, t].astype(bool)
        if active.any():
            reads = devices.read_g(
                g[active], now - t_prog[active], params, rng
            ).sum(axis=1)
            drive = float(np.sum(reads / (n_per_synapse * span)))
        else:
            drive = 0.0
        neuron_v = leak_lambda * neuron_v + drive
        spiked = neuron_v >= v_thresh
        if spiked:
            neuron_v = 0.0
            post[t] = 1
        if homeostasis_eta > 0:
            v_thresh *= np.exp(homeostasis_eta * ((1.0 if spiked else 0.0) - target_rate))

        lo = max(0, t - w + 1)
        pre_window = pre[:, lo: t + 1].any(axis=1)
        post_window = post[lo: t + 1].any()

        if spiked and rule.dw_plus > 0:
            pot = np.where(pre_window)[0]
        else:
            pot = np.empty(0, dtype=int)
        if rule.dw_minus > 0:
            dep = np.where(active & ~post_window)[0]
        else:
            dep = np.empty(0, dtype=int)

        for group, direction, n_pulses in ((pot, "set", rule.dw_plus),
                                           (dep, "reset", rule.dw_minus)):
            if group.size == 0:
                continue
            sel = (arbiter_counter + np.arange(group.size)) % n_per_synapse
            arbiter_counter = (arbiter_counter + group.size) % n_per_synapse
            rows, cols = group, sel
            g_cur = devices.drifted_g(g[rows, cols], now - t_prog[rows, cols], params)
            if direction == "set":
                for _ in range(n_pulses):
                    g_cur = devices.set_pulse(g_cur, params, rng)
            else:
                g_cur = devices.reset_pulse(g_cur, params, rng)
            g[rows, cols] = g_cur
            t_prog[rows, cols] = now

    # final weights are measured the way hardware would: one noisy,
    # drifted read per device at the end of the run
    final_now = steps * dt_step
    summed = devices.read_g(g, final_now - t_prog, params, rng).sum(axis=1)
    w_corr, w_unc = summed[:n_corr], summed[n_corr:]
    var = w_corr.var() + w_unc.var()
    d = (w_corr.mean() - w_unc.mean()) / np.sqrt(max(var, 1e-30))
    bins = np.linspace(0.0, n_per_synapse * params.g_max, 33)
    return SeparationReport(
        mean_corr=float(w_corr.mean()), mean_unc=float(w_unc.mean()),
        std_corr=float(w_corr.std()), std_unc=float(w_unc.std()),
        separation=float(d), n_per_synapse=n_per_synapse,
        post_spike_count=int(post.sum()),
        hist_corr=np.histogram(w_corr, bins=bins)[0].tolist(),
        hist_unc=np.histogram(w_unc, bins=bins)[0].tolist(),
    )


# ---------------------------------------------------------------------------
# Efficiency model
# ---------------------------------------------------------------------------

@dataclass
class EfficiencyModel:
    """Add-vs-multiply cost model for spike propagation."""

    c_add: float = 1.0
    c_mul: float = 4.0
    p: float = 0.01
    ratio_T_dt: float = 100.0

    def __post_init__(self):
        if self.c_add <= 0 or self.c_mul <= 0:
            raise ValueError("operation costs must be positive")
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("spike probability must lie in [0, 1]")
        if self.ratio_T_dt < 1:
            raise ValueError("ratio_T_dt must be >= 1")


def snn_efficiency_favorable(model):
    """Spike-based propagation wins when c_add * p * (T/dt) < c_mul."""
    lhs = model.c_add * model.p * model.ratio_T_dt
    return lhs < model.c_mul, model.c_mul - lhs
