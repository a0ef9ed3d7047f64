"""Seeded random streams.

Every stochastic stage draws from a Philox generator whose key is derived from
the user seed and a tuple of stage labels, so a stage's output depends only on
``(seed, labels)`` and never on call order or thread count.
"""

import hashlib

import numpy as np

GENERATOR_VERSION = "philox-seedseq-v1"


def _label_word(label):
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(label).encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def stream(seed, *labels):
    """Return an independent ``np.random.Generator`` for ``(seed, *labels)``."""
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(_label_word(l) for l in labels))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *labels):
    """Derive a 63-bit integer seed for a sub-stage."""
    return int(stream(seed, *labels).integers(0, 2**63 - 1))
