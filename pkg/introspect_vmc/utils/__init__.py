"""Utility helpers shared across the pipeline."""

from .parallel import parallel_map
from .seeding import derive_rng, derive_seed

__all__ = ["derive_rng", "derive_seed", "parallel_map"]
