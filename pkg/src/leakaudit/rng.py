"""Seed handling.

All randomness in the package flows from numpy's ``PCG64`` bit generator.
Child streams are derived with ``SeedSequence`` so that, for example, the
k-th shadow model gets the same seed no matter how many threads train the
shadows or in which order they finish.
"""

import numpy as np

PRNG_VERSION = f"numpy-{np.__version__}/PCG64/SeedSequence"


def check_seed(seed):
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed, *path):
    """Returns a Generator for ``seed`` and an optional integer derivation path."""
    seed = check_seed(seed)
    entropy = [seed, *(int(p) for p in path)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed, *path):
    """Returns a fresh 64-bit seed derived from ``seed`` and ``path``."""
    seed = check_seed(seed)
    ss = np.random.SeedSequence([seed, *(int(p) for p in path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
