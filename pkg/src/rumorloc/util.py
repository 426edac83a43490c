"""Small shared helpers: rounding and seeded RNG streams."""

from __future__ import annotations

import math

import numpy as np


def round_half_up(x: float) -> int:
    """Round to nearest integer with exact halves going up.

    Python's round() rounds halves to even, which disagrees with the
    sizing conventions used throughout (e.g. a 0.1 mask fraction on 115
    nodes masks 12 of them).
    """
    return int(math.floor(x + 0.5))


def ceil_threshold(x: float) -> int:
    """Ceiling with a tiny backoff so float noise cannot bump the result.

    0.2 * 115 evaluates to 23.000000000000004; a plain ceil would demand
    24 infections where exact arithmetic says 23.
    """
    return int(math.ceil(x - 1e-9))


def spawn_rng(*entropy: int) -> np.random.Generator:
    """Deterministic generator keyed by a tuple of integers.

    Streams for distinct keys are independent, so per-sample streams
    derived from (master_seed, counter) make generation order-free.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
