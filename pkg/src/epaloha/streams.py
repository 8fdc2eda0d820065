"""
Deterministic random substreams.

Every stream is keyed by integers (master seed, stream id, block index), so a
block of trials draws the same numbers no matter which worker runs it or in
what order blocks complete.
"""
from typing import Iterator, Tuple

import numpy as np

BLOCK_TRIALS = 4096


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for the counter key (master_seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *(int(k) for k in key)]))


def trial_blocks(trials: int, block: int = BLOCK_TRIALS) -> Iterator[Tuple[int, int]]:
    """Yield (block_index, size) pairs covering `trials` trials."""
    index = 0
    start = 0
    while start < trials:
        size = min(block, trials - start)
        yield index, size
        index += 1
        start += size
