"""Counter-based fan-out of one master seed into independent RNG streams.

Stream ``(component, index)`` is seeded by
``SeedSequence(master_seed, spawn_key=(component, index))``, so adding
discriminators never shifts the data, noise or generator streams.
"""

from __future__ import annotations

import numpy as np

DATA = 0
NOISE = 1
DROPOUT = 2
INIT = 3
EVAL = 4


def stream(master_seed: int, component: int, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(component, index))
    return np.random.Generator(np.random.PCG64(seq))
