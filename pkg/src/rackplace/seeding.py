"""Counter-based RNG streams.

All randomness flows through Philox keyed by (seed, stream), so any single
draw is reproducible independently of how many other draws happened before
it. Batch item i derives its own seed from (master seed, i) and is therefore
stable under changes to the batch size.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one (seed, stream) pair."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & _MASK64, int(stream) & _MASK64]))


def child_seed(seed: int, index: int) -> int:
    """Derived seed for batch item ``index`` under a master seed."""
    return int(rng_stream(seed, index).integers(0, 2**63))
