"""
Stationary and discounted visitation distributions by dense linear solves
"""
import logging
from typing import Any

import numpy as np
from scipy import linalg

from pfedac.environments.mdp import FiniteMdp
from pfedac.utils.error_handler import DimensionMismatch, SingularChain

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-12
RESIDUAL_TOL = 1e-10


def policy_table(policy: Any) -> np.ndarray:
    """Accept a SoftmaxPolicy or a raw |S| x |A| probability table"""
    if hasattr(policy, "probabilities"):
        return policy.probabilities()
    return np.asarray(policy, dtype=float)


def induced_kernel(mdp: FiniteMdp, policy: Any) -> np.ndarray:
    """K_theta(s, s') = sum_a pi(a|s) P(s'|s, a)"""
    probs = policy_table(policy)
    if probs.shape != (mdp.num_states, mdp.num_actions):
        raise DimensionMismatch(f"policy table must be {mdp.num_states}x{mdp.num_actions}")
    return np.einsum("sa,sat->st", probs, mdp.transitions)


def policy_reward(mdp: FiniteMdp, policy: Any) -> np.ndarray:
    """r_pi(s) = sum_a pi(a|s) R(s, a)"""
    return np.sum(policy_table(policy) * mdp.rewards, axis=1)


def stationary_of_kernel(kernel: np.ndarray) -> np.ndarray:
    """
    Solve mu K = mu, sum(mu) = 1 with the last balance equation replaced by normalization

    Args:
        kernel: Row-stochastic n x n matrix

    Returns:
        Stationary distribution

    Raises:
        SingularChain: the system is rank-deficient (reducible chain)
    """
    n = kernel.shape[0]
    system = kernel.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0

    lu, piv = linalg.lu_factor(system)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= PIVOT_TOL * max(1.0, pivots.max()):
        raise SingularChain(
            "stationary system is rank-deficient; the induced chain is reducible",
            {"min_pivot": float(pivots.min())},
        )
    mu = linalg.lu_solve((lu, piv), rhs)

    residual = float(np.max(np.abs(mu @ kernel - mu)))
    if residual > RESIDUAL_TOL or mu.min() < -RESIDUAL_TOL:
        raise SingularChain(
            f"stationary solve is not accurate (residual {residual:.3e})",
            {"residual": residual, "min_entry": float(mu.min())},
        )
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def stationary_distribution(mdp: FiniteMdp, policy: Any) -> np.ndarray:
    """mu_theta of the chain induced by the policy on the MDP"""
    return stationary_of_kernel(induced_kernel(mdp, policy))


def discounted_visitation(mdp: FiniteMdp, policy: Any, eta: np.ndarray) -> np.ndarray:
    """nu = (1 - gamma) eta^T (I - gamma K_theta)^{-1}"""
    gamma = mdp.discount
    kernel = induced_kernel(mdp, policy)
    nu = (1.0 - gamma) * linalg.solve((np.eye(mdp.num_states) - gamma * kernel).T, np.asarray(eta, dtype=float))
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()
