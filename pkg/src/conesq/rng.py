"""Deterministic stream splitting.

Every randomized routine takes a master seed and derives child generators
with SeedSequence spawn keys built from a purpose tag and integer context
(apex index, shell index, trial number). Identical (seed, purpose, context)
always reproduces the same stream, and distinct purposes never share one,
so Monte Carlo estimates of two truncations of the same integral can share
samples exactly when they are meant to.
"""

from __future__ import annotations

import numpy as np

_PURPOSES = {}


def _purpose_code(purpose: str) -> int:
    # Stable small-int code per tag; registration order inside one process
    # never matters because the tag bytes themselves feed the sequence.
    code = _PURPOSES.get(purpose)
    if code is None:
        code = int.from_bytes(purpose.encode("utf-8")[:8].ljust(8, b"\0"), "little")
        _PURPOSES[purpose] = code
    return code


def stream(seed: int, purpose: str, *context: int) -> np.random.Generator:
    """Child generator for (seed, purpose, *context)."""
    key = (_purpose_code(purpose),) + tuple(int(c) for c in context)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def wilson_interval(successes: int, trials: int, z: float = 2.5758293035489004):
    """Wilson score interval; default z is the two-sided 99% normal quantile."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * ((p * (1 - p) + z2 / (4 * trials)) / trials) ** 0.5 / denom
    return max(0.0, centre - half), min(1.0, centre + half)
