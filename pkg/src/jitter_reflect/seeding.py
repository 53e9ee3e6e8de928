"""Seed derivation for reproducible, order-independent experiments.

Every random stream in the package is a ``numpy.random.Generator`` backed by
PCG64. Child seeds are a BLAKE2b hash of ``(master_seed, tag, index)``, so
adding trials or cells never shifts the streams of existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

U64_MASK = (1 << 64) - 1


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """Return a 64-bit seed derived from ``(master_seed, tag, index)``."""
    payload = f"{int(master_seed) & U64_MASK}:{tag}:{int(index)}".encode()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & U64_MASK))
