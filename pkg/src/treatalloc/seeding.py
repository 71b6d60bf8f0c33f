"""Deterministic seed derivation.

Every replication draws from its own stream keyed by
``(stream_seed, condition_index, replication_index)``, so the order in which
replications execute (or which thread runs them) never changes a result.
"""

import hashlib

import numpy as np

UINT64_MASK = (1 << 64) - 1


def strategy_seed(master_seed: int, name: str) -> int:
    """Hash ``(master_seed, name)`` into a 64-bit stream seed.

    Uses SHA-256 rather than ``hash()``, which is salted per process.
    """
    digest = hashlib.sha256(f"{int(master_seed)}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def replication_seed(stream_seed: int, condition_index: int, replication_index: int) -> int:
    ss = np.random.SeedSequence(
        int(stream_seed) & UINT64_MASK,
        spawn_key=(int(condition_index), int(replication_index)),
    )
    return int(ss.generate_state(1, np.uint64)[0])


def replication_seeds(stream_seed: int, condition_index: int, start: int, count: int) -> list[int]:
    return [replication_seed(stream_seed, condition_index, r) for r in range(start, start + count)]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator for one 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & UINT64_MASK))
