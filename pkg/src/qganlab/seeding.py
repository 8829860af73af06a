"""Domain-separated deterministic random streams.

Every run derives all of its randomness from a single integer seed. Distinct
concerns (weight init, data shuffling, latent draws, the frozen noise table,
metric sampling) each get their own stream so that consuming randomness in one
place can never shift the draws seen by another. Stream derivation goes through
``numpy.random.SeedSequence``, whose mixing is stable across numpy versions.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, label: str) -> np.random.Generator:
    """Return the PRNG stream for (seed, label); a pure function of both."""
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))
