"""Compressed sensing on in-memory MVM.

The measurement matrix lives in a crossbar; compression is one analog
pass, and AMP recovery reuses the very same matrix and its transpose for
every product. A plain dense-matrix operator provides the float oracle
path for comparisons.
"""

from dataclasses import dataclass, field

import numpy as np

from . import crossbar
from .crossbar import TiledMatrix
from .devices import DeviceParams

NMSE_FLOOR_DB = -300.0


class AmpDivergenceError(RuntimeError):
    def __init__(self, iteration):
        super().__init__(f"AMP produced non-finite values at iteration {iteration}")
        self.iteration = iteration


class DenseOperator:
    """Exact float measurement operator (the oracle path)."""

    def __init__(self, M):
        self.M = np.asarray(M, dtype=float)
        self.shape = self.M.shape
        self.mvm_count = 0

    def matvec(self, x, rng=None):
        self.mvm_count += 1
        return self.M @ x

    def rmatvec(self, y, rng=None):
        self.mvm_count += 1
        return self.M.T @ y


class CrossbarOperator:
    """Measurement operator backed by a (tiled) crossbar."""

    def __init__(self, tiled):
        self.tiled = tiled
        self.shape = tiled.shape

    def matvec(self, x, rng=None):
        return crossbar.scaled_mvm(self.tiled, x, rng)

    def rmatvec(self, y, rng=None):
        return crossbar.scaled_mvm_transpose(self.tiled, y, rng)

    @property
    def mvm_count(self):
        return self.tiled.product_count


@dataclass
class CsProblem:
    n: int
    m: int
    sparsity_k: int
    measurement: TiledMatrix

    def __post_init__(self):
        if not (0 < self.m < self.n):
            raise ValueError(f"need 0 < m < n, got m={self.m}, n={self.n}")
        if self.sparsity_k > self.n:
            raise ValueError("sparsity_k cannot exceed n")


@dataclass
class RecoveryTrace:
    estimates: list = field(default_factory=list)
    nmse_db: list = field(default_factory=list)
    iterations_run: int = 0

    @property
    def x_hat(self):
        return self.estimates[-1]


def make_problem(n, m, k, rng, params=None, tile_dim=crossbar.MAX_DIM,
                 mode="iterative", tol=None, max_iter=200):
    """Gaussian measurement matrix N(0, 1/m), programmed into a crossbar."""
    M = rng.standard_normal((m, n)) / np.sqrt(m)
    tiled = TiledMatrix.from_matrix(
        M, rng, tile_dim=tile_dim, params=params, mode=mode, tol=tol, max_iter=max_iter
    )
    return CsProblem(n=n, m=m, sparsity_k=k, measurement=tiled), M


def sparse_signal(n, k, rng):
    """k-sparse Gaussian signal in the canonical basis."""
    x = np.zeros(n)
    idx = rng.choice(n, size=k, replace=False)
    x[idx] = rng.standard_normal(k)
    return x


def compress(problem, x, rng):
    """One analog pass: y = M @ x under the configured nonidealities."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"signal length {x.shape} does not match n={problem.n}")
    return crossbar.scaled_mvm(problem.measurement, x, rng)


def nmse(x_true, x_hat):
    """Normalized mean square error in dB; -300 dB sentinel for exact."""
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_true.shape != x_hat.shape:
        raise ValueError("length mismatch")
    denom = np.sum(x_true ** 2)
    if denom == 0:
        raise ValueError("zero-norm ground truth")
    num = np.sum((x_hat - x_true) ** 2)
    if num == 0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(num / denom), NMSE_FLOOR_DB)


def soft_threshold(v, theta):
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def amp_recover(op, y, iters, lam=2.0, rng=None, x_true=None, keep_estimates=True):
    """Soft-thresholding AMP with Onsager correction.

    Iterates
        x_{t+1} = soft(x_t + M^T z_t; theta_t),  theta_t = lam*|z_t|/sqrt(m)
        z_{t+1} = y - M x_{t+1} + (z_t / m) * ||x_{t+1}||_0
    with every product routed through `op` (crossbar or dense float).
    Records per-iteration NMSE when ground truth is supplied.
    """
    y = np.asarray(y, dtype=float)
    m, n = op.shape
    if y.shape != (m,):
        raise ValueError(f"measurement length {y.shape} does not match m={m}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    x = np.zeros(n)
    z = y.copy()
    trace = RecoveryTrace()
    for t in range(iters):
        theta = lam * np.linalg.norm(z) / np.sqrt(m)
        pseudo = x + op.rmatvec(z, rng)
        x = soft_threshold(pseudo, theta)
        onsager = (z / m) * np.count_nonzero(x)
        z = y - op.matvec(x, rng) + onsager
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise AmpDivergenceError(t)
        if keep_estimates:
            trace.estimates.append(x.copy())
        if x_true is not None:
            trace.nmse_db.append(nmse(x_true, x))
        trace.iterations_run += 1
    if not keep_estimates:
        trace.estimates.append(x.copy())
    return trace


# ---------------------------------------------------------------------------
# PGM image helpers (8-bit grayscale, binary P5)
# ---------------------------------------------------------------------------

def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        # skip whitespace and comments
        while i < len(data) and data[i: i + 1].isspace():
            i += 1
        if data[i: i + 1] == b"#":
            while i < len(data) and data[i: i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j: j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    if tokens[0] != b"P5":
        raise ValueError("only binary P5 PGM supported")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("only 8-bit PGM supported")
    pixels = np.frombuffer(data[i + 1: i + 1 + w * h], dtype=np.uint8)
    return pixels.reshape(h, w)


def write_pgm(path, img):
    img = np.clip(np.asarray(img), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())
