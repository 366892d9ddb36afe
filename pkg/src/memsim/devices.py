"""Phenomenological analog memory cell models.

The device model is deliberately simple: exponential-saturation SET
(each pulse closes a fixed fraction of the gap to g_max), abrupt noisy
RESET to the floor, multiplicative Gaussian programming and read noise,
and power-law conductance decay between programming and read. A volatile
variant with first-order decay dynamics backs the memristive reservoir
nodes.

All conductances are in microsiemens, times in seconds. Array-level
helpers operate on plain numpy arrays of conductances so crossbars can
process whole grids at once; the scalar DeviceState API wraps the same
primitives.
"""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


class ClockError(ValueError):
    """A device was touched at a time earlier than its last programming."""


class Polarity(Enum):
    SET = "set"
    RESET = "reset"


@dataclass(frozen=True)
class DeviceParams:
    """Shared cell parameters.

    Defaults are placeholders of PCM-typical magnitude; no quantitative
    device data is claimed. All fields can be overridden from the
    harness JSON config under the "device" key.
    """

    g_min: float = 0.1            # floor conductance (uS)
    g_max: float = 25.0           # ceiling conductance (uS)
    set_step_fraction: float = 0.05   # per-pulse gap fraction, alpha in (0, 1]
    prog_noise_rel: float = 0.1   # relative std of a per-pulse conductance change
    read_noise_rel: float = 0.02  # relative std of a single read
    drift_nu: float = 0.05        # decay exponent, >= 0
    drift_t0: float = 1.0         # reference time (s), > 0
    kappa_reset: float = 0.5      # RESET spread multiplier

    def __post_init__(self):
        if not (0.0 < self.g_min < self.g_max):
            raise ValueError(f"need 0 < g_min < g_max, got {self.g_min}, {self.g_max}")
        if not (0.0 < self.set_step_fraction <= 1.0):
            raise ValueError(f"set_step_fraction must be in (0, 1], got {self.set_step_fraction}")
        if self.prog_noise_rel < 0 or self.read_noise_rel < 0 or self.drift_nu < 0:
            raise ValueError("noise and drift parameters must be non-negative")
        if self.drift_t0 <= 0:
            raise ValueError(f"drift_t0 must be positive, got {self.drift_t0}")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown device parameter(s): {sorted(unknown)}; valid: {sorted(known)}")
        return cls(**d)

    def to_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @property
    def ideal(self):
        """True if the parameterization is noise- and drift-free."""
        return self.prog_noise_rel == 0 and self.read_noise_rel == 0 and self.drift_nu == 0


IDEAL = DeviceParams(prog_noise_rel=0.0, read_noise_rel=0.0, drift_nu=0.0)


@dataclass(frozen=True)
class Pulse:
    polarity: Polarity
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"pulse count must be >= 1, got {self.count}")


# ---------------------------------------------------------------------------
# Array-level primitives (work elementwise on numpy arrays or scalars)
# ---------------------------------------------------------------------------

def drift_factor(elapsed, params):
    """Power-law decay factor ((elapsed + t0)/t0)**(-nu) for elapsed >= 0."""
    if params.drift_nu == 0.0:
        return np.ones_like(np.asarray(elapsed, dtype=float))
    t0 = params.drift_t0
    return ((np.asarray(elapsed, dtype=float) + t0) / t0) ** (-params.drift_nu)


def drifted_g(g_programmed, elapsed, params):
    return np.clip(g_programmed * drift_factor(elapsed, params), params.g_min, params.g_max)


def read_g(g_programmed, elapsed, params, rng):
    """Noisy drifted read; does not mutate anything."""
    g = g_programmed * drift_factor(elapsed, params)
    if params.read_noise_rel > 0:
        g = g * (1.0 + params.read_noise_rel * rng.standard_normal(np.shape(g)))
    return np.clip(g, params.g_min, params.g_max)


def set_pulse(g, params, rng, scale=1.0):
    """One SET pulse: g += scale * alpha * (g_max - g) * (1 + noise).

    `scale` in (0, 1] models amplitude-controlled programming pulses as
    used by the closed-loop programmer; a full-strength pulse has
    scale = 1.
    """
    dg = scale * params.set_step_fraction * (params.g_max - np.asarray(g, dtype=float))
    if params.prog_noise_rel > 0:
        dg = dg * (1.0 + params.prog_noise_rel * rng.standard_normal(np.shape(g)))
    return np.clip(g + dg, params.g_min, params.g_max)


def reset_pulse(g, params, rng):
    """Abrupt RESET to the floor with one-sided spread."""
    new = np.full_like(np.asarray(g, dtype=float), params.g_min)
    if params.prog_noise_rel > 0:
        eta = rng.standard_normal(np.shape(g))
        new = new * (1.0 + np.abs(eta) * params.prog_noise_rel * params.kappa_reset)
    return np.clip(new, params.g_min, params.g_max)


def set_pulse_aggregate(g, n_pulses, dg_target, params, rng):
    """Apply `n_pulses` equal amplitude-controlled SET pulses at once.

    Each pulse contributes dg_target with independent multiplicative
    noise, so the aggregate change is n*dg_target plus Gaussian noise of
    std dg_target*sqrt(n)*prog_noise_rel. Used by the mixed-precision
    flush where per-entry pulse counts vary widely.
    """
    n = np.asarray(n_pulses, dtype=float)
    dg = n * dg_target
    if params.prog_noise_rel > 0:
        dg = dg + dg_target * np.sqrt(n) * params.prog_noise_rel * rng.standard_normal(np.shape(n))
    return np.clip(g + dg, params.g_min, params.g_max)


def program_iterative_array(g, targets, tol, max_iter, params, rng):
    """Vectorized closed-loop programming of an array of cells.

    Alternates read and corrective pulse per cell: amplitude-scaled SET
    when below target, RESET-and-restart when the read overshoots
    target + tol. Returns (g, achieved_reads, iters) where iters is the
    per-cell iteration count at convergence (max_iter if never met).
    """
    shape = np.shape(g)
    g = np.array(g, dtype=float).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    if np.any(targets < params.g_min - 1e-12) or np.any(targets > params.g_max + 1e-12):
        raise ValueError("programming target outside [g_min, g_max]")
    achieved = np.array(g)
    iters = np.zeros(g.shape, dtype=int)
    idx = np.arange(g.size)
    alpha = params.set_step_fraction
    log1a = np.log(1.0 - alpha) if alpha < 1.0 else -np.inf
    for _ in range(max_iter):
        if idx.size == 0:
            break
        iters[idx] += 1
        gs, ts = g[idx], targets[idx]
        r = read_g(gs, 0.0, params, rng)
        achieved[idx] = r
        done = np.abs(r - ts) <= tol
        over = ~done & (r > ts + tol)
        under = ~done & ~over
        if over.any():
            sel = idx[over]
            g[sel] = reset_pulse(g[sel], params, rng)
        if under.any():
            sel = idx[under]
            gu, tu, ru = g[sel], ts[under], r[under]
            # burst size: full pulses needed per the noiseless staircase,
            # estimated from the current read; the last fraction of a gap
            # is closed by a single amplitude-scaled pulse
            resid = np.maximum(params.g_max - tu, tol / 4.0)
            below = np.maximum(params.g_max - ru, 1e-30)
            if np.isfinite(log1a):
                k = np.floor(np.log(np.minimum(resid / below, 1.0)) / log1a).astype(int)
            else:
                k = np.zeros(sel.size, dtype=int)
            kmax = int(k.max(initial=0))
            for i in range(kmax):
                mask = k > i
                gu[mask] = set_pulse(gu[mask], params, rng)
            gap = alpha * (params.g_max - gu)
            scale = np.clip((tu - gu) / np.maximum(gap, 1e-30), 0.0, 1.0)
            g[sel] = set_pulse(gu, params, rng, scale=scale)
        idx = idx[~done]
    return g.reshape(shape), achieved.reshape(shape), iters.reshape(shape)


# ---------------------------------------------------------------------------
# Scalar device API
# ---------------------------------------------------------------------------

@dataclass
class DeviceState:
    """One analog cell: programmed conductance plus its drift clock."""

    g_programmed: float
    t_last_program: float = 0.0
    params: DeviceParams = field(default_factory=DeviceParams)

    def __post_init__(self):
        p = self.params
        if not (p.g_min <= self.g_programmed <= p.g_max):
            raise ValueError(f"g_programmed {self.g_programmed} outside [{p.g_min}, {p.g_max}]")


def _check_clock(state, now):
    if now < state.t_last_program:
        raise ClockError(
            f"device touched at t={now} before its last programming at t={state.t_last_program}"
        )


def apply_pulse(state, pulse, now, rng):
    """Apply a pulse train; returns the new state."""
    _check_clock(state, now)
    p = state.params
    g = float(drifted_g(state.g_programmed, now - state.t_last_program, p))
    for _ in range(pulse.count):
        if pulse.polarity is Polarity.SET:
            g = float(set_pulse(g, p, rng))
        else:
            g = float(reset_pulse(g, p, rng))
    return DeviceState(g_programmed=g, t_last_program=now, params=p)


def read(state, now, rng):
    """Noisy drifted read of a single cell; pure."""
    _check_clock(state, now)
    return float(read_g(state.g_programmed, now - state.t_last_program, state.params, rng))


def program_iterative(state, g_target, tol, max_iter, now, rng):
    """Closed-loop programming of a single cell.

    Returns (new_state, achieved_read, iterations). Convergence failure
    is reported through iters == max_iter, not raised.
    """
    _check_clock(state, now)
    p = state.params
    if not (p.g_min <= g_target <= p.g_max):
        raise ValueError(f"target {g_target} outside [{p.g_min}, {p.g_max}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    g0 = float(drifted_g(state.g_programmed, now - state.t_last_program, p))
    g, achieved, iters = program_iterative_array(
        np.array([g0]), np.array([g_target]), tol, max_iter, p, rng
    )
    new = DeviceState(g_programmed=float(g[0]), t_last_program=now, params=p)
    return new, float(achieved[0]), int(iters[0])


# ---------------------------------------------------------------------------
# Volatile device (reservoir nodes)
# ---------------------------------------------------------------------------

@dataclass
class VolatileDeviceState:
    """Short-retention cell: decays toward the floor, driven by |input|."""

    g: float
    decay_tau: float = 1.0
    input_gain: float = 1.0
    params: DeviceParams = field(default_factory=DeviceParams)

    def __post_init__(self):
        if self.decay_tau <= 0:
            raise ValueError("decay_tau must be positive")
        if not (self.params.g_min <= self.g <= self.params.g_max):
            raise ValueError("g outside device range")


def volatile_step(state, input_v, dt):
    """One Euler step of the volatile dynamics; deterministic."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = state.params
    g = volatile_step_array(
        np.array([state.g]), np.array([input_v]), dt, state.decay_tau, state.input_gain, p
    )[0]
    return replace(state, g=float(g))


def volatile_step_array(g, inputs, dt, decay_tau, input_gain, params):
    g = np.asarray(g, dtype=float)
    dg = -(g - params.g_min) / decay_tau + input_gain * np.abs(inputs) * (params.g_max - g)
    return np.clip(g + dt * dg, params.g_min, params.g_max)
