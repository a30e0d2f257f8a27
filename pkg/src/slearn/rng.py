"""Deterministic random streams.

All randomness in the package flows through Philox, a 64-bit counter-based
generator, so that a single integer seed reproduces every run bit-for-bit.
Independent stages derive their own substream by XOR-ing the seed with a
stable 64-bit hash of the stage name.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stage_key(stage: str) -> int:
    """Stable 64-bit hash of a stage name (not Python's salted hash)."""
    digest = hashlib.blake2b(stage.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, stage: str) -> np.random.Generator:
    """Generator for `stage` derived from `seed`; same args, same stream."""
    return np.random.Generator(np.random.Philox(key=(seed ^ stage_key(stage)) & _MASK64))
