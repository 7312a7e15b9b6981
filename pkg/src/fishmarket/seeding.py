"""Deterministic random-stream derivation.

Every generator in a run descends from one 64-bit master seed through
the path (master_seed, trial, purpose code, index), so any trial, agent
or episode stream can be re-created in isolation and runs are bit-for-
bit reproducible regardless of scheduling.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "environment": 0,   # buyer budgets / valuations
    "agent_init": 1,    # network initialisation
    "agent_action": 2,  # action sampling
    "agent_update": 3,  # minibatch shuffling
    "obfuscation": 4,   # valuation noise
}


def stream(
    master_seed: int, trial: int, purpose: str, index: int = 0
) -> np.random.Generator:
    """Generator for one (trial, purpose, index) slot under the master seed."""
    return np.random.default_rng(
        np.random.SeedSequence([int(master_seed), int(trial), PURPOSES[purpose], int(index)])
    )
