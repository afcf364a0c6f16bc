"""Deterministic derivation of independent random streams.

Every command takes one master seed; all substreams (per configuration, per
replicate, per episode, ...) are derived from it through a spawn key, so any
subset of the work can be redone in isolation and reproduce the full run.
"""

from __future__ import annotations

import numpy as np


def derive_seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed),
                                  spawn_key=tuple(int(k) for k in key))


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream identified by (master_seed, *key)."""
    return np.random.default_rng(derive_seed_sequence(master_seed, *key))
