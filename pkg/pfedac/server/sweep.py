"""
Linear-speedup sweep over the number of agents.

Every K in the list runs on a prefix of one federation generated at max(K_list),
with the same T, stepsizes and U_omega, and reports the time-averaged X_bar
and G_bar over [burn_in, T). L and K are swept independently.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from pfedac.environments.generators import generate_federation
from pfedac.environments.mdp import Federation
from pfedac.server.rounds import Hyperparams, resolve_radius, run_federation
from pfedac.utils.error_handler import InvalidValue
from pfedac.utils.reporting import is_monotone_nonincreasing, time_averages

logger = logging.getLogger(__name__)


@dataclass
class SweepRow:
    K: int
    x_bar_T: Optional[float]
    pad_T: Optional[float]
    g_bar_T: Optional[float]
    rounds_averaged: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "K": self.K,
            "x_bar_T": self.x_bar_T,
            "pad_T": self.pad_T,
            "g_bar_T": self.g_bar_T,
            "rounds_averaged": self.rounds_averaged,
        }


@dataclass
class SweepResult:
    rows: List[SweepRow] = field(default_factory=list)
    radius: float = 0.0
    federation_hash: str = ""

    @property
    def verdict(self) -> Dict[str, bool]:
        return {
            "x_bar_T": is_monotone_nonincreasing([row.x_bar_T for row in self.rows]),
            "g_bar_T": is_monotone_nonincreasing([row.g_bar_T for row in self.rows]),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [row.to_dict() for row in self.rows],
            "monotone_nonincreasing": self.verdict,
            "U_omega": self.radius,
            "federation_hash": self.federation_hash,
        }


def speedup_sweep(K_list: Sequence[int], T: int, config, federation: Optional[Federation] = None) -> SweepResult:
    """
    Time-averaged metrics per K

    Args:
        K_list: Agent counts, run in ascending order
        T: Rounds per run
        config: RunConfig supplying env, stepsizes, L, seed, burn_in
        federation: Optional federation with at least max(K_list) agents

    Returns:
        SweepResult with one row per K and the monotonicity verdict
    """
    if not K_list:
        raise InvalidValue("K_list must not be empty")
    ordered = sorted(set(int(K) for K in K_list))
    if ordered[0] < 1:
        raise InvalidValue("K_list entries must be at least 1")
    largest = ordered[-1]
    if federation is None:
        federation = generate_federation(config, largest)
    elif federation.num_agents < largest:
        raise InvalidValue(f"federation has {federation.num_agents} agents, sweep needs {largest}")

    radius = resolve_radius(config, federation.prefix(largest))
    hp = Hyperparams.from_config(config, radius)
    result = SweepResult(radius=radius, federation_hash=federation.prefix(largest).content_hash())

    for K in ordered:
        logger.info(f"Sweep: K={K}, T={T}")
        server = run_federation(
            federation.prefix(K), hp, config.r, T, config.seed,
            mode="pfedac", tie_to_groups=config.tie_policy_to_groups,
        )
        averages = time_averages(server.metrics_history, config.burn_in, T)
        result.rows.append(SweepRow(K=K, **averages))

    logger.info(f"Sweep verdict: {result.verdict}")
    return result
