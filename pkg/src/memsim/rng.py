"""Seeded randomness discipline.

Every stochastic routine takes an explicit numpy Generator. Experiments
derive independent substreams from (seed, label...) so that parallel or
reordered task schedules stay reproducible.
"""

import hashlib

import numpy as np


def child_seed(seed, *labels):
    """Derive a 64-bit child seed from a parent seed and stable labels."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest()[:8], "little")


def substream(seed, *labels):
    """Independent Generator for the task identified by `labels`."""
    return np.random.default_rng(child_seed(seed, *labels))
