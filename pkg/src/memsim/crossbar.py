"""Differential crossbar arrays and tiling.

A signed weight w is carried by a device pair (g_plus, g_minus): the
active device is programmed to g_min + |w|/w_max * (g_max - g_min) and
its partner parked at g_min. Currents obey Ohm's and Kirchhoff's laws,
so a matrix-vector product is one analog pass:

    I_k = sum_j (g_plus[k,j] - g_minus[k,j]) * V_j

with V_j = x_j * v_read, decoded back to weight units so that ideal
devices reproduce A @ x exactly. Matrices larger than the maximum
reliable array size are split across a grid of tiles whose partial
results are summed digitally (the digital accumulation is exact; no ADC
model).
"""

import numpy as np

from . import devices
from .devices import DeviceParams

# Largest array that can be fabricated and operated reliably; larger
# matrices must be tiled.
MAX_DIM = 2048


class CrossbarArray:
    """One differential array with its own drift clock.

    Conductance grids are stored as numpy arrays plus per-device
    programming timestamps; `now` is the array's local clock, advanced
    explicitly by `advance_time`.
    """

    def __init__(self, rows, cols, params=None, w_max=1.0, v_read=0.2):
        if not (1 <= rows <= MAX_DIM and 1 <= cols <= MAX_DIM):
            raise ValueError(f"array dimensions must be in [1, {MAX_DIM}], got {rows}x{cols}")
        if w_max <= 0 or v_read <= 0:
            raise ValueError("w_max and v_read must be positive")
        self.rows = rows
        self.cols = cols
        self.params = params if params is not None else DeviceParams()
        self.w_max = float(w_max)
        self.v_read = float(v_read)
        g0 = self.params.g_min
        self.g_plus = np.full((rows, cols), g0)
        self.g_minus = np.full((rows, cols), g0)
        self.t_plus = np.zeros((rows, cols))
        self.t_minus = np.zeros((rows, cols))
        self.now = 0.0
        self.mvm_count = 0

    # -- programming --------------------------------------------------------

    def weight_targets(self, A):
        """Map a weight matrix to (g_plus, g_minus) conductance targets."""
        p = self.params
        span = p.g_max - p.g_min
        mag = p.g_min + np.abs(A) / self.w_max * span
        tp = np.where(A >= 0, mag, p.g_min)
        tm = np.where(A < 0, mag, p.g_min)
        return tp, tm

    def decode(self, g_plus, g_minus):
        """Invert the mapping: differential conductances to weight units."""
        p = self.params
        return (g_plus - g_minus) * self.w_max / (p.g_max - p.g_min)

    def program_matrix(self, A, rng, mode="iterative", tol=None, max_iter=200):
        """Program a weight matrix into the device pairs.

        mode "iterative" runs the closed-loop program-read-correct cycle
        per device; "single_shot" resets and applies one open-loop pulse
        train. Timestamps are set to the array clock.
        """
        A = np.asarray(A, dtype=float)
        if A.shape != (self.rows, self.cols):
            raise ValueError(f"matrix shape {A.shape} does not match array {self.rows}x{self.cols}")
        if np.max(np.abs(A), initial=0.0) > self.w_max * (1 + 1e-12):
            raise ValueError(
                f"matrix entries exceed w_max={self.w_max}; rescale before programming"
            )
        p = self.params
        tp, tm = self.weight_targets(A)
        if tol is None:
            tol = 0.005 * (p.g_max - p.g_min)
        if mode == "iterative":
            self.g_plus, _, _ = devices.program_iterative_array(
                self.g_plus, tp, tol, max_iter, p, rng
            )
            self.g_minus, _, _ = devices.program_iterative_array(
                self.g_minus, tm, tol, max_iter, p, rng
            )
        elif mode == "single_shot":
            self.g_plus = self._single_shot(tp, rng)
            self.g_minus = self._single_shot(tm, rng)
        else:
            raise ValueError(f"unknown programming mode {mode!r}")
        self.t_plus.fill(self.now)
        self.t_minus.fill(self.now)
        return self

    def _single_shot(self, targets, rng):
        """RESET then an open-loop SET pulse train computed from the
        noiseless staircase, finished with one amplitude-scaled pulse."""
        p = self.params
        alpha = p.set_step_fraction
        g = devices.reset_pulse(self.g_plus * 0 + p.g_min, p, rng)
        span = p.g_max - p.g_min
        # full pulses k with g_max - span*(1-alpha)^k just below target
        frac = np.clip((p.g_max - targets) / span, 1e-12, 1.0)
        k = np.floor(np.log(frac) / np.log(1.0 - alpha)).astype(int)
        kmax = int(k.max(initial=0))
        for i in range(kmax):
            mask = k > i
            if not mask.any():
                break
            g = np.where(mask, devices.set_pulse(g, p, rng), g)
        gap = alpha * (p.g_max - g)
        scale = np.clip((targets - g) / np.maximum(gap, 1e-30), 0.0, 1.0)
        return devices.set_pulse(g, p, rng, scale=scale)

    # -- analog compute -----------------------------------------------------

    def _read_pair(self, rng):
        p = self.params
        gp = devices.read_g(self.g_plus, self.now - self.t_plus, p, rng)
        gm = devices.read_g(self.g_minus, self.now - self.t_minus, p, rng)
        return gp, gm

    def mvm(self, x, rng):
        """Analog A @ x. Inputs are voltage amplitudes x*v_read."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.cols,):
            raise ValueError(f"input length {x.shape} does not match cols {self.cols}")
        gp, gm = self._read_pair(rng)
        i_out = (gp - gm) @ (x * self.v_read)
        self.mvm_count += 1
        return i_out * self.w_max / (self.v_read * (self.params.g_max - self.params.g_min))

    def mvm_transpose(self, y, rng):
        """Analog A.T @ y: same physics with rows and columns exchanged."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.rows,):
            raise ValueError(f"input length {y.shape} does not match rows {self.rows}")
        gp, gm = self._read_pair(rng)
        i_out = (gp - gm).T @ (y * self.v_read)
        self.mvm_count += 1
        return i_out * self.w_max / (self.v_read * (self.params.g_max - self.params.g_min))

    def advance_time(self, dt):
        """Shift the array clock; reads after this see more drift."""
        if dt < 0:
            raise ValueError(f"dt must be non-negative, got {dt}")
        self.now += dt
        return self


class TiledMatrix:
    """A real matrix spread over a grid of crossbar tiles.

    Interior tiles are tile_dim square; edge tiles cover exactly the
    residual rows/columns (inputs past the matrix edge are zero, so a
    padded and an exact-size edge tile compute the same currents).
    Partial products are accumulated digitally (exactly) across the
    tile grid.
    """

    def __init__(self, shape, tile_dim, params=None, w_max=1.0, v_read=0.2):
        if tile_dim > MAX_DIM:
            raise ValueError(f"tile_dim {tile_dim} exceeds MAX_DIM {MAX_DIM}")
        self.shape = tuple(shape)
        self.tile_dim = int(tile_dim)
        n_rows, n_cols = self.shape
        d = self.tile_dim
        self.grid_rows = -(-n_rows // d)
        self.grid_cols = -(-n_cols // d)
        self.tiles = [
            [
                CrossbarArray(
                    min(d, n_rows - i * d),
                    min(d, n_cols - j * d),
                    params=params, w_max=w_max, v_read=v_read,
                )
                for j in range(self.grid_cols)
            ]
            for i in range(self.grid_rows)
        ]
        self.params = self.tiles[0][0].params
        self.w_max = float(w_max)
        # logical analog products (one per mvm/mvm_transpose call,
        # regardless of how many tiles participate)
        self.product_count = 0

    @classmethod
    def from_matrix(cls, A, rng, tile_dim=MAX_DIM, params=None, w_max=None,
                    v_read=0.2, mode="iterative", tol=None, max_iter=200):
        A = np.asarray(A, dtype=float)
        if w_max is None:
            w_max = max(np.max(np.abs(A)), 1e-12)
        tm = cls(A.shape, min(tile_dim, MAX_DIM), params=params, w_max=w_max, v_read=v_read)
        tm.program(A, rng, mode=mode, tol=tol, max_iter=max_iter)
        return tm

    def _block(self, A, i, j):
        d = self.tile_dim
        return A[i * d: (i + 1) * d, j * d: (j + 1) * d]

    def program(self, A, rng, mode="iterative", tol=None, max_iter=200):
        A = np.asarray(A, dtype=float)
        if A.shape != self.shape:
            raise ValueError(f"matrix shape {A.shape} does not match {self.shape}")
        for i in range(self.grid_rows):
            for j in range(self.grid_cols):
                self.tiles[i][j].program_matrix(
                    self._block(A, i, j), rng, mode=mode, tol=tol, max_iter=max_iter
                )
        return self

    def mvm(self, x, rng):
        x = np.asarray(x, dtype=float)
        n_rows, n_cols = self.shape
        if x.shape != (n_cols,):
            raise ValueError(f"input length {x.shape} does not match cols {n_cols}")
        d = self.tile_dim
        self.product_count += 1
        out = np.zeros(n_rows)
        for j in range(self.grid_cols):
            xj = x[j * d: (j + 1) * d]
            for i in range(self.grid_rows):
                out[i * d: (i + 1) * d] += self.tiles[i][j].mvm(xj, rng)
        return out

    def mvm_transpose(self, y, rng):
        y = np.asarray(y, dtype=float)
        n_rows, n_cols = self.shape
        if y.shape != (n_rows,):
            raise ValueError(f"input length {y.shape} does not match rows {n_rows}")
        d = self.tile_dim
        self.product_count += 1
        out = np.zeros(n_cols)
        for i in range(self.grid_rows):
            yi = y[i * d: (i + 1) * d]
            for j in range(self.grid_cols):
                out[j * d: (j + 1) * d] += self.tiles[i][j].mvm_transpose(yi, rng)
        return out

    def advance_time(self, dt):
        for row in self.tiles:
            for t in row:
                t.advance_time(dt)
        return self

    @property
    def mvm_count(self):
        return sum(t.mvm_count for row in self.tiles for t in row)

    def decode_programmed(self):
        """Drift-free read-back of the stored matrix in weight units."""
        n_rows, n_cols = self.shape
        d = self.tile_dim
        W = np.zeros((n_rows, n_cols))
        for i in range(self.grid_rows):
            for j in range(self.grid_cols):
                t = self.tiles[i][j]
                W[i * d: i * d + t.rows, j * d: j * d + t.cols] = t.decode(t.g_plus, t.g_minus)
        return W


def scaled_mvm(op, x, rng):
    """MVM with dynamic input normalization.

    Voltage amplitudes must stay in [-1, 1]; arbitrary vectors are scaled
    down before the analog pass and the result rescaled (exact for a
    linear array).
    """
    s = np.max(np.abs(x), initial=0.0)
    if s <= 1.0:
        return op.mvm(x, rng)
    return s * op.mvm(np.asarray(x, dtype=float) / s, rng)


def scaled_mvm_transpose(op, y, rng):
    s = np.max(np.abs(y), initial=0.0)
    if s <= 1.0:
        return op.mvm_transpose(y, rng)
    return s * op.mvm_transpose(np.asarray(y, dtype=float) / s, rng)
