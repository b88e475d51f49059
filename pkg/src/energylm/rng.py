"""Named random streams derived from a single run seed.

Every source of randomness in a run (parameter init, batch shuffling, noise
sampling, chain moves, ...) draws from its own stream so that components stay
reproducible independently of each other.
"""

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for the named stream of a run seed."""
    # crc32 keyed by the stream name: stable across processes, unlike hash().
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
