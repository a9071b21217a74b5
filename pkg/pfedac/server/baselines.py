"""
Comparison arms sharing the pfedac round loop.

local_only: each agent runs single-agent actor-critic with a full d-dimensional
critic z^k, no subspace and no communication. fedavg_full: the same full
critic, averaged across agents after every round (no personalization).
Both are the round loop with B = I_d, so x = z - z* is measured the same way.
"""
import logging
from typing import Callable, Dict, Optional

from pfedac.environments.mdp import Federation
from pfedac.server.rounds import Hyperparams, RoundMetrics, ServerState, run_federation
from pfedac.utils.error_handler import InvalidValue
from pfedac.utils.invariants import InvariantMonitor
from pfedac.utils.reporting import time_averages

logger = logging.getLogger(__name__)

BASELINE_MODES = ("local_only", "fedavg_full")


def run_baseline(mode: str, federation: Federation, hp: Hyperparams, T: int, seed: int,
                 tie_to_groups: bool = False, monitor: Optional[InvariantMonitor] = None,
                 on_metrics: Optional[Callable[[RoundMetrics], None]] = None) -> ServerState:
    """
    Run one comparison arm

    Args:
        mode: local_only or fedavg_full
        federation: Federation
        hp: Hyperparameters; the full critic is not projected, radius only sizes U_delta
        T: Rounds
        seed: Root seed (same stream split as pfedac)
        tie_to_groups: Tie policies within state groups
        monitor: Optional invariant monitor
        on_metrics: Callback for each recorded metrics row

    Returns:
        Final ServerState with metrics history
    """
    if mode not in BASELINE_MODES:
        raise InvalidValue(f"baseline mode must be one of {BASELINE_MODES}, got {mode!r}")
    logger.info(f"Running baseline {mode} with K={federation.num_agents}, T={T}")
    return run_federation(
        federation, hp, federation.features.dim, T, seed, mode=mode,
        tie_to_groups=tie_to_groups, monitor=monitor, on_metrics=on_metrics,
    )


def compare_arms(federation: Federation, hp: Hyperparams, r: int, T: int, seed: int, burn_in: int,
                 tie_to_groups: bool = False) -> Dict[str, Dict]:
    """Time-averaged metrics of pfedac and both baselines at matched T and stepsizes"""
    results = {
        "pfedac": run_federation(federation, hp, r, T, seed, mode="pfedac", tie_to_groups=tie_to_groups),
    }
    for mode in BASELINE_MODES:
        results[mode] = run_baseline(mode, federation, hp, T, seed, tie_to_groups=tie_to_groups)
    return {mode: time_averages(server.metrics_history, burn_in, T) for mode, server in results.items()}
