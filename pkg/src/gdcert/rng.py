"""Counter-based random streams.

Every trial draws from its own stream keyed by ``(seed, *keys)``, so results
do not depend on execution order or on how many workers run the trials.
"""

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


# stream identifiers, kept distinct so experiments never share draws
INITS = 1
STEPS = 2
PAIRS = 3
LIPSCHITZ = 4
CONFIGS = 5
