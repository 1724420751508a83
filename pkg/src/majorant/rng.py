"""Counter-based random substreams.

Every Monte Carlo block draws from its own Philox stream keyed on
``(seed, block index)``, so the set of samples does not depend on how blocks
are distributed across workers.
"""
from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MASK:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return seed


def substream(seed: int, index: int) -> np.random.Generator:
    """Generator for substream ``index`` of ``seed``."""
    seed = check_seed(seed)
    if index < 0:
        raise ValueError("substream index must be nonnegative")
    return np.random.Generator(np.random.Philox(key=seed + (int(index) << 64)))


def block_sizes(total: int, block: int) -> list[int]:
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])
