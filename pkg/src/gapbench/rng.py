"""Counter-based random streams keyed by (seed, *indices).

Every trial draws from its own Philox stream, so results do not depend on
the order in which trials run or on how many run at once.
"""

import numpy as np


def stream(seed, *key):
    """Return a Generator for the stream identified by ``seed`` and ``key``.

    The key entries must be non-negative integers (N, trial index, ...).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
