"""Deterministic random-number streams.

Every stochastic step in the pipeline draws from a PCG64 generator whose seed
is derived from the run seed plus a tuple of string/int labels naming the work
item, e.g. ``stream(seed, "aoi-3", "iqr_filter:3.0", "gb", "iter", 12, "tree", 40)``.
Labels are hashed with SHA-256 so streams for distinct work items are
independent, and a given item sees the same stream whether the surrounding
loop runs serially or in parallel.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(root_seed: int, *labels) -> int:
    """128-bit seed derived from the root seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(root_seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:16], "big")


def stream(root_seed: int, *labels) -> np.random.Generator:
    """PCG64 generator for the work item named by ``labels``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(child_seed(root_seed, *labels))))


def kernel_seed(gen: np.random.Generator) -> np.uint64:
    """Draw a 64-bit seed for the compiled tree kernel's internal PRNG."""
    return np.uint64(gen.integers(0, 2**64, dtype=np.uint64))
