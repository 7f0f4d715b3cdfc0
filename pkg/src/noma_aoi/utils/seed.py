"""Explicit, seedable RNG streams for Monte-Carlo work.

Nothing in the package touches global RNG state: every stochastic
operation receives a ``numpy.random.Generator`` built here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from loguru import logger


def _check_seed(seed: object) -> int:
    # bool is an int subclass but never a sensible seed
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return seed


@dataclass(frozen=True)
class SeedConfig:
    """Immutable seed for one reproducible run.

    Args:
        seed: Non-negative integer used to build the run's RNG stream.
    """

    seed: int

    def __post_init__(self) -> None:
        _check_seed(self.seed)

    def rng(self) -> np.random.Generator:
        """Return a fresh generator for this seed."""
        return make_rng(self.seed)


def make_rng(seed: int) -> np.random.Generator:
    """Build a PCG64 generator from an explicit seed.

    Raises:
        ValueError: If seed is negative or not an integer.
    """
    _check_seed(seed)
    logger.debug("RNG stream created with seed {}", seed)
    return np.random.default_rng(seed)


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent child seeds from one parent seed.

    Uses ``SeedSequence.spawn`` so children are statistically independent
    and the mapping is stable across runs and platforms.
    """
    _check_seed(seed)
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n!r}")
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]
