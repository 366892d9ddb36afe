"""Dataset loaders for the training experiments.

The 8x8 handwritten-digits set bundled with scikit-learn is the offline
default; full MNIST is read from IDX files when a data directory is
supplied.
"""

import gzip
import os
import struct

import numpy as np


def load_digits_split(rng, test_fraction=0.2):
    """Bundled 8x8 digits, pixel values scaled to [0, 1], seeded split."""
    from sklearn.datasets import load_digits

    ds = load_digits()
    X = ds.data / 16.0
    y = ds.target
    n = X.shape[0]
    order = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    test, train = order[:n_test], order[n_test:]
    return X[train], y[train], X[test], y[test]


def _read_idx(path):
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        magic = struct.unpack(">I", f.read(4))[0]
        ndim = magic & 0xFF
        dims = struct.unpack(">" + "I" * ndim, f.read(4 * ndim))
        data = np.frombuffer(f.read(), dtype=np.uint8)
    return data.reshape(dims)


def load_mnist(data_dir):
    """Standard IDX-format MNIST from `data_dir`; pixels scaled to [0, 1]."""
    def find(stem):
        for name in (stem, stem + ".gz"):
            p = os.path.join(data_dir, name)
            if os.path.exists(p):
                return p
        raise FileNotFoundError(f"MNIST file {stem} not found in {data_dir}")

    X_train = _read_idx(find("train-images-idx3-ubyte")).reshape(-1, 784) / 255.0
    y_train = _read_idx(find("train-labels-idx1-ubyte"))
    X_test = _read_idx(find("t10k-images-idx3-ubyte")).reshape(-1, 784) / 255.0
    y_test = _read_idx(find("t10k-labels-idx1-ubyte"))
    return X_train, y_train.astype(int), X_test, y_test.astype(int)
