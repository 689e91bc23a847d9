"""Master-seed fan-out.

All randomness in a run descends from one master seed. Sub-seeds are derived
from (master, *keys) with numpy's SeedSequence, so they do not depend on the
order in which tasks are scheduled.
"""
import hashlib
from typing import Union

import numpy as np


SeedKey = Union[int, str]


def _key_to_int(key: SeedKey) -> int:
    if isinstance(key, str):
        # stable across processes, unlike hash()
        return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")
    return int(key)


def derive_seed(master: int, *keys: SeedKey) -> int:
    """Derive a 64-bit seed from a master seed and a path of keys."""
    entropy = [int(master) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def sklearn_seed(seed: int) -> int:
    """Fold a 64-bit seed into the 32-bit range scikit-learn accepts."""
    return int(seed) % (2 ** 32)
