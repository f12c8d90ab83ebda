"""Named, splittable random streams.

Every draw in the simulator comes from a stream addressed by
``(seed, *key)``; streams with different keys are independent and a stream
never depends on how many draws other streams made.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ALGORITHMS", "stream"]

# Philox is counter-based: its output is a pure function of (key, counter).
ALGORITHMS = {"philox": np.random.Philox}


def stream(seed: int, *key: int, algorithm: str = "philox") -> np.random.Generator:
    try:
        bitgen = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(
            f"unknown rng algorithm {algorithm!r}; choose from {sorted(ALGORITHMS)}"
        ) from None
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(bitgen(ss))
