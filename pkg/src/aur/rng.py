"""Deterministic random-stream derivation.

Every stochastic stage of the pipeline draws from a generator derived from
(master seed, stage key, indices). Streams are therefore pure functions of
their key, so a resumed run or a re-run with the same seed consumes exactly
the same random numbers without any generator state being persisted.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def substream(master_seed: int, *keys) -> np.random.Generator:
    """Generator for the stream identified by (master_seed, *keys).

    Keys may be ints or strings; strings are hashed stably so the mapping
    does not depend on interpreter hash randomization.
    """
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
