"""
The exact L-step TD system A_L z + b_bar = 0 under the stationary law
"""
import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy import linalg

from pfedac.environments.mdp import FeatureMap, FiniteMdp
from pfedac.oracle.stationary import induced_kernel, policy_reward, stationary_distribution
from pfedac.utils.error_handler import InvalidValue

logger = logging.getLogger(__name__)

# Relative singular-value cutoff below which A_L counts as rank-deficient
SINGULAR_TOL = 1e-12


@dataclass
class TdSystem:
    A_L: np.ndarray
    b_bar: np.ndarray
    z_star: np.ndarray
    lambda_margin: float
    singular: bool = False
    residual: float = 0.0
    mu: Optional[np.ndarray] = None


def td_matrices(mdp: FiniteMdp, policy: Any, features: FeatureMap, L: int, mu: Optional[np.ndarray] = None):
    """
    A_L = Phi^T diag(mu) (gamma^L K^L - I) Phi and
    b_bar = sum_{l<L} gamma^l Phi^T diag(mu) K^l r_pi
    """
    if L < 1:
        raise InvalidValue("L must be at least 1")
    gamma = mdp.discount
    Phi = features.matrix
    kernel = induced_kernel(mdp, policy)
    if mu is None:
        mu = stationary_distribution(mdp, policy)
    weighted = Phi.T * mu[None, :]

    reward = policy_reward(mdp, policy)
    discounted_reward = np.zeros(mdp.num_states)
    propagated = reward.copy()
    for l in range(L):
        discounted_reward += gamma ** l * propagated
        propagated = kernel @ propagated

    kernel_L = np.linalg.matrix_power(kernel, L)
    A_L = weighted @ (gamma ** L * kernel_L @ Phi - Phi)
    b_bar = weighted @ discounted_reward
    return A_L, b_bar, mu


def td_system(mdp: FiniteMdp, policy: Any, features: FeatureMap, L: int,
              mu: Optional[np.ndarray] = None) -> TdSystem:
    """
    Build and solve the L-step TD system

    A singular A_L is reported through the `singular` flag with a least-squares
    fixed point; it never raises.

    Args:
        mdp: Agent environment
        policy: SoftmaxPolicy or probability table
        features: Feature map
        L: Number of TD steps
        mu: Optional precomputed stationary distribution

    Returns:
        TdSystem
    """
    A_L, b_bar, mu = td_matrices(mdp, policy, features, L, mu)

    singular_values = linalg.svdvals(A_L)
    singular = bool(singular_values.min() <= SINGULAR_TOL * max(singular_values.max(), 1e-300))
    if singular:
        logger.warning(f"A_L is rank-deficient (smallest singular value {singular_values.min():.3e}); using least squares")
        z_star = linalg.lstsq(A_L, -b_bar)[0]
    else:
        z_star = linalg.solve(A_L, -b_bar)

    top_eigenvalue = float(linalg.eigh(0.5 * (A_L + A_L.T), eigvals_only=True)[-1])
    residual = float(np.linalg.norm(A_L @ z_star + b_bar))
    return TdSystem(
        A_L=A_L,
        b_bar=b_bar,
        z_star=z_star,
        lambda_margin=-top_eigenvalue / L,
        singular=singular,
        residual=residual,
        mu=mu,
    )
