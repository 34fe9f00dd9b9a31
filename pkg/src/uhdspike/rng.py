"""Counter-based random streams for reproducible trials.

Every trial draws from its own Philox stream keyed by
``mix(master_seed, trial_index)``, so results never depend on how trials are
scheduled across workers.
"""

import numpy as np

_MASK = (1 << 64) - 1

# Bumped whenever the stream derivation or the sampling recipes change.
GENERATOR_VERSION = f"philox4x64-splitmix64-v1/numpy-{np.__version__}"


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood 2014), a bijection on 64-bit ints."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix(seed: int, index: int) -> int:
    """Derive a 64-bit stream key from a master seed and a stream index."""
    return splitmix64(splitmix64(seed & _MASK) ^ (index & _MASK))


def stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=mix(seed, index)))
