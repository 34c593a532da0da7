"""Deterministic per-chain random streams.

Every stream is a Philox generator keyed by (root_seed, index, phase), so
a chain's variates never depend on how chains are scheduled across workers
or on how many barriers a phase contains. Each chain consumes its own
streams sequentially and nothing else touches them.
"""

from __future__ import annotations

import numpy as np

from src.errors import InvalidArgumentError

PHASE_KEYS = {"warmup": 0, "sampling": 1, "init": 2, "oracle": 3}


def derive_chain_rng(root_seed: int, chain_index: int, phase: str = "sampling") -> np.random.Generator:
    if chain_index < 0:
        raise InvalidArgumentError(f"chain_index must be non-negative, got {chain_index}")
    if not 0 <= root_seed < 2**64:
        raise InvalidArgumentError(f"root_seed must be a 64-bit unsigned integer, got {root_seed}")
    if phase not in PHASE_KEYS:
        raise InvalidArgumentError(f"unknown stream phase {phase!r}")
    seed_seq = np.random.SeedSequence(entropy=root_seed, spawn_key=(chain_index, PHASE_KEYS[phase]))
    return np.random.Generator(np.random.Philox(seed_seq))
