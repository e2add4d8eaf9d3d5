"""Seeded random substreams.

Every stochastic stage draws from its own PCG64 generator, keyed by
``(seed, stage, tick)`` through :class:`numpy.random.SeedSequence` spawn keys.
A stage can therefore be re-run in isolation and still see exactly the numbers
it saw inside a full run.
"""
from __future__ import annotations

import math

import numpy as np

# Stage identifiers used as the first spawn-key component.
INIT = 0
INTEL = 1
DECEPTION = 2
OBSERVE = 3
ATTRITION = 4

_SEED_MASK = (1 << 64) - 1


def substream(seed: int, stage: int, tick: int = 0) -> np.random.Generator:
    """Return the generator for ``stage`` at ``tick`` of the run seeded ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be a non-negative 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(entropy=seed & _SEED_MASK, spawn_key=(stage, tick))
    return np.random.Generator(np.random.PCG64(ss))


def poisson_by_inversion(rng: np.random.Generator, lam: float) -> int:
    """Draw a Poisson variate from one uniform by CDF inversion.

    Returns the smallest ``k`` with ``P(X <= k) >= u``. One uniform is consumed
    whatever the outcome, which keeps downstream draws aligned.
    """
    if lam < 0:
        raise ValueError("Poisson rate must be >= 0")
    u = rng.random()
    if lam == 0:
        return 0
    k = 0
    p = math.exp(-lam)
    cdf = p
    while u > cdf:
        k += 1
        p *= lam / k
        cdf += p
        if p == 0.0 and k > lam:
            break
    return k
