"""
Splittable seed derivation.

Every random stream in the pipeline is keyed by a tuple of integers (run seed,
purpose, episode id, tick, ...) rather than drawn from a shared generator, so
results do not depend on which worker handles which episode.
"""

from typing import Iterable

import numpy as np

# purpose keys keep streams for different consumers disjoint
PURPOSE_SCENE = 1
PURPOSE_TRAIN = 2
PURPOSE_NOISE = 3
PURPOSE_RECOVERY = 4
PURPOSE_EXPLORE = 5


def _entropy(keys: Iterable[int]) -> list:
    return [int(k) & 0xFFFFFFFF for k in keys]


def derive_seed(*keys: int) -> int:
    """A 32-bit seed that is a pure function of ``keys``."""
    return int(np.random.SeedSequence(_entropy(keys)).generate_state(1)[0])


def derive_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(_entropy(keys)))
