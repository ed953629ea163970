"""Root-seed expansion into independent, stable sub-streams.

Every stream is keyed by a tuple of integers (stream id, then e.g. a client id)
and derived with ``numpy.random.SeedSequence(root, spawn_key=keys)``. A key
always maps to the same stream, so adding clients never shifts the streams
of existing ones.
"""
import numpy as np

POOLS = 0
PROPORTIONS = 1
CLIENT = 2


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)))
