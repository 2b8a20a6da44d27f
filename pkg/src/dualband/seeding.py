"""Stable seed derivation so one ``--seed`` drives every subsystem."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, name: str) -> int:
    """Derive a 63-bit child seed from ``(seed, name)`` via SHA-256.

    Python's ``hash`` is salted per process, so it cannot be used here.
    """
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_for(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, name))
