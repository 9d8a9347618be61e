"""Deterministic named derivation of RNG streams from a single root seed.

Every random component (chain, synthetic dataset, replicate, noised cell)
derives its own stream from (root seed, name path), so a run is reproducible
from one seed and independent components never share a stream.
"""

import hashlib

import numpy as np


def _hash_token(token):
    digest = hashlib.sha256(repr(token).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed_sequence(root, *path):
    entropy = [int(root) & 0xFFFFFFFFFFFFFFFF] + [_hash_token(t) for t in path]
    return np.random.SeedSequence(entropy)


def derive_rng(root, *path):
    return np.random.default_rng(derive_seed_sequence(root, *path))
