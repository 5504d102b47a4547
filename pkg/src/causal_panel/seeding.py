"""Deterministic RNG substreams."""
import hashlib

import numpy as np


def derive_seed(master_seed: int, key: str) -> int:
    """64-bit seed from ``(master_seed, key)``, independent of scheduling order."""
    digest = hashlib.sha256(f"{int(master_seed)}\x1f{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master_seed: int, key: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, key))
