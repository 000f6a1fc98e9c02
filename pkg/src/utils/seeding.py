"""
Counter-based seed derivation.

Every random stream in a run is derived from the root seed plus a tuple of
task labels, so the stream a subtask sees does not depend on scheduling order.
"""
import hashlib
from typing import Union

import numpy as np
import torch

Key = Union[int, float, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, int) and key >= 0:
        return key
    digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(root: int, *keys: Key) -> np.random.SeedSequence:
    return np.random.SeedSequence(root, spawn_key=tuple(_key_to_int(k) for k in keys))


def derive_seed(root: int, *keys: Key) -> int:
    """31-bit integer seed for the subtask named by `keys`."""
    return int(seed_sequence(root, *keys).generate_state(1)[0] & 0x7FFFFFFF)


def make_rng(root: int, *keys: Key) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root, *keys))


def make_torch_generator(seed: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator
