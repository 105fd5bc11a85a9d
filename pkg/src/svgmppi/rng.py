"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by the
run seed plus a tuple of integers naming the purpose (cycle index, particle,
iteration, ...). Streams never depend on call order or thread scheduling.
"""

import numpy as np

# first element of every spawn key
MPPI_SAMPLES = 0
GUIDE_MC = 1
GUIDE_INIT = 2
OBSTACLES = 3
TEST = 99


def stream(seed, *key):
    """Return a fresh ``np.random.Generator`` for ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
