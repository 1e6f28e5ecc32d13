"""Counter-based random streams.

Every stochastic component draws from its own Philox substream, keyed by
(seed, domain, *indices). Substreams are independent and reproducible no
matter how work is scheduled across threads, which is what makes trajectories
and Monte Carlo aggregates bit-stable for a fixed seed.
"""

from __future__ import annotations

import numpy as np

# Domain tags. Never reuse a tag for a new purpose: that would silently
# correlate streams of old and new runs.
INIT = 0
SAMPLES = 1
RIDGE_FIT = 2
RIDGE_VAL = 3
TEST_ERROR = 4
GRONWALL = 5
MC = 6
DIRECTIONS = 7


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the Philox generator for stream (seed, *key)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
