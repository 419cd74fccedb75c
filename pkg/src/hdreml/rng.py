"""Reproducible random streams for replicated experiments.

Streams are counter-based (Philox) and keyed on (master_seed,
replication_index), so replication k of a sweep draws the same numbers
whether it runs first, last, or on another worker.
"""

import numpy as np


def replication_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one replication of an experiment.

    The same (master_seed, index) pair always yields an identical stream;
    distinct pairs yield statistically independent streams.
    """
    if master_seed < 0 or index < 0:
        raise ValueError("master_seed and index must be nonnegative")
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(seq))
