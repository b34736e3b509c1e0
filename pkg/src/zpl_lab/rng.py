"""Reproducible random streams.

Every stochastic step draws from a Philox4x64-10 counter-based generator
(``numpy.random.Philox``).  Its key comes from ``numpy.random.SeedSequence``
fed with the 64-bit master seed plus a spawn key built from the call-site
labels, e.g. ``derive_rng(seed, "scan", 17)`` for scan point 17.  Labels
are hashed with BLAKE2b so string and integer tags mix freely, and a
given (seed, labels) pair always yields the same stream regardless of the
order or thread in which streams are created.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def _label_word(label) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        data = b"i" + int(label).to_bytes(16, "little", signed=True)
    else:
        data = b"s" + str(label).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(data, digest_size=4).digest(), "little")


def derive_seed(master_seed: int, *labels) -> np.random.SeedSequence:
    if master_seed is None:
        raise ValueError("a master seed is required")
    return np.random.SeedSequence(
        int(master_seed) & MASK64, spawn_key=tuple(_label_word(x) for x in labels)
    )


def derive_rng(master_seed: int, *labels) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(master_seed, *labels)))


def derive_int(master_seed: int, *labels) -> int:
    """A 64-bit child seed, for handing to APIs that take a plain integer."""
    state = derive_seed(master_seed, *labels).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
