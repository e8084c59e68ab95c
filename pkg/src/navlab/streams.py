"""Seeded random streams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, namespace, *key)``. Philox is counter based, so a stream depends
only on its key and never on how many other streams were consumed before
it. This is what makes parallel schedules irrelevant to the output.
"""
import numpy as np

# namespaces
PRODUCT = 1
RBA = 2
EXACT = 3
PAIRS = 4
COHERENCE = 5
REJECTION = 6
EXPERIMENT = 7


def stream(seed, *key):
    """Return an independent generator for ``seed`` and integer ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
