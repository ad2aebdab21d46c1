"""Seed derivation and random generator construction.

All randomness in the package flows through Philox, a counter-based
bit generator with a machine-independent stream, so a (config, seed)
pair reproduces the same artifacts everywhere. The platform-global
numpy RNG is never touched.

Seeds fan out from a master seed by hashing a path of labels, e.g.
``derive_seed(master, "run", 3)``. The derivation is SHA-256 over the
'/'-joined decimal/string parts, truncated to the first 8 digest bytes
(little-endian).
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a path of labels and integers."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator for the given seed."""
    return np.random.Generator(np.random.Philox(seed))
