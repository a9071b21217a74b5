"""
Seed management for reproducible runs.

Every random stream is derived from one root seed with numpy's SeedSequence:

    stream(role, index) = Generator(PCG64(SeedSequence(root, spawn_key=(ROLE, index))))

Roles are fixed integers so adding agents never perturbs existing streams, and a
federation with K agents is a prefix of the one with K' > K agents.
"""
from typing import Dict

import numpy as np

ROLE_IDS: Dict[str, int] = {
    "environment": 0,
    "agent_environment": 1,
    "critic": 2,
    "actor": 3,
    "subspace_init": 4,
    "oracle_check": 5,
}


def stream(root_seed: int, role: str, index: int = 0) -> np.random.Generator:
    """
    Build the random stream for one (role, index) pair

    Args:
        root_seed: Root seed of the run
        role: One of ROLE_IDS
        index: Agent index, or 0 for global streams

    Returns:
        Independent numpy Generator
    """
    if role not in ROLE_IDS:
        raise KeyError(f"Unknown random stream role: {role}")
    sequence = np.random.SeedSequence(entropy=int(root_seed), spawn_key=(ROLE_IDS[role], int(index)))
    return np.random.Generator(np.random.PCG64(sequence))
