"""Deterministic derivation of per-item random streams.

Every stochastic stage draws from a numpy PCG64 generator whose seed is
derived from the base seed plus string keys (stage name, session id, ...).
Keys are hashed with SHA-256 so streams are stable across runs and
machines, unlike Python's salted ``hash``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_entropy(base_seed: int, *keys: object) -> list[int]:
    """Map (base_seed, keys...) to a list of 32-bit words for SeedSequence."""
    h = hashlib.sha256()
    h.update(str(int(base_seed)).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode())
    digest = h.digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def derive_rng(base_seed: int, *keys: object) -> np.random.Generator:
    """Independent generator for one (seed, keys...) combination."""
    return np.random.default_rng(np.random.SeedSequence(derive_entropy(base_seed, *keys)))
