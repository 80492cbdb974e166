"""Deterministic, splittable random streams.

Every random stream in the package is derived from a tuple of non-negative
integer keys, e.g. ``(master_seed, trial_index)`` or ``(run_seed, t)``.
Streams with different keys are statistically independent and the mapping
does not depend on call order, so trials can run in any order or in parallel.
"""

import numpy as np


def make_rng(*keys: int) -> np.random.Generator:
    """Return a PCG64 generator seeded from ``keys``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in keys])))


def derive_seed(*keys: int) -> int:
    """Collapse ``keys`` into a single 63-bit seed usable as a new key."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
