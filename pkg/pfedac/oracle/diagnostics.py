"""
Assumption diagnostics: exploration margin, feature norms and coverage of the
subspace by the fixed points. Diagnostics never fail; they report. The exploration
margin is certified only at the policies passed in, not uniformly over theta.
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg

from pfedac.environments.mdp import FeatureMap, Federation
from pfedac.oracle.td import td_system
from pfedac.utils.error_handler import DimensionMismatch

logger = logging.getLogger(__name__)

# Eigenvalues below this fraction of the largest count as zero
ZERO_EIGENVALUE_RATIO = 1e-9


def lambda_plus_min(Z: np.ndarray) -> float:
    """Smallest nonzero eigenvalue of Z Z^T, 0 when Z is numerically zero"""
    eigenvalues = linalg.eigh(Z @ Z.T, eigvals_only=True)
    top = eigenvalues[-1]
    if top <= 0:
        return 0.0
    positive = eigenvalues[eigenvalues > ZERO_EIGENVALUE_RATIO * top]
    return float(positive.min())


def numerical_rank(Z: np.ndarray) -> int:
    eigenvalues = linalg.eigh(Z @ Z.T, eigvals_only=True)
    top = eigenvalues[-1]
    if top <= 0:
        return 0
    return int(np.sum(eigenvalues > ZERO_EIGENVALUE_RATIO * top))


@dataclass
class AssumptionReport:
    lambda_margin: List[float]
    singular: List[bool]
    feature_norm_max: float
    nu_hat: float
    rank: int
    r: int
    flags: Dict[str, bool] = field(default_factory=dict)
    certified_at: str = "visited policies only"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def subspace_coverage(fixed_points: np.ndarray) -> float:
    """nu_hat = lambda+_min(Z* Z*^T) / K with fixed points as columns"""
    return lambda_plus_min(fixed_points) / fixed_points.shape[1]


def check_assumptions(federation: Federation, policy_list: Sequence[Any],
                      features: Optional[FeatureMap], L: int, r: int) -> AssumptionReport:
    """
    Pointwise diagnostics of the exploration, bounded-feature and coverage assumptions

    Args:
        federation: Federation to inspect
        policy_list: One policy per agent
        features: Feature map, defaults to the federation's
        L: TD steps
        r: Subspace rank the run will use

    Returns:
        AssumptionReport
    """
    if features is None:
        features = federation.features
    if len(policy_list) != federation.num_agents:
        raise DimensionMismatch(f"need one policy per agent ({federation.num_agents}), got {len(policy_list)}")

    systems = [td_system(mdp, policy, features, L) for mdp, policy in zip(federation.agents, policy_list)]
    Z = np.column_stack([system.z_star for system in systems])
    degenerate = not np.any(Z)
    nu_hat = 0.0 if degenerate else subspace_coverage(Z)
    rank = 0 if degenerate else numerical_rank(Z)

    margins = [system.lambda_margin for system in systems]
    report = AssumptionReport(
        lambda_margin=margins,
        singular=[system.singular for system in systems],
        feature_norm_max=features.max_norm(),
        nu_hat=nu_hat,
        rank=rank,
        r=r,
        flags={
            "exploration_ok": all(m > 0 for m in margins),
            "features_bounded": features.max_norm() <= 1.0 + 1e-12,
            "coverage_ok": nu_hat > 0,
            "rank_matches_r": rank == r,
            "degenerate": degenerate,
        },
    )
    if not report.flags["exploration_ok"]:
        logger.warning("A_L is not negative definite for at least one agent")
    if degenerate:
        logger.warning("All fixed points are zero; coverage is degenerate")
    return report
