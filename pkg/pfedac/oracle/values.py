"""
Exact V, Q, J and policy gradient of a softmax policy
"""
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy import linalg

from pfedac.environments.mdp import FiniteMdp
from pfedac.oracle.stationary import (
    discounted_visitation,
    induced_kernel,
    policy_reward,
    policy_table,
    stationary_distribution,
)


@dataclass
class StationaryQuantities:
    mu: np.ndarray
    nu: np.ndarray
    J: float
    gradJ: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    param_grad: Optional[np.ndarray] = None

    @property
    def grad_norm_sq(self) -> float:
        grad = self.gradJ if self.param_grad is None else self.param_grad
        return float(np.sum(grad ** 2))


def exact_values(mdp: FiniteMdp, policy: Any):
    """V = (I - gamma P_pi)^{-1} r_pi and Q = R + gamma P V"""
    gamma = mdp.discount
    kernel = induced_kernel(mdp, policy)
    V = linalg.solve(np.eye(mdp.num_states) - gamma * kernel, policy_reward(mdp, policy))
    Q = mdp.rewards + gamma * np.einsum("sat,t->sa", mdp.transitions, V)
    return V, Q


def expected_return(mdp: FiniteMdp, policy: Any, eta: np.ndarray) -> float:
    """J = eta^T V"""
    V, _ = exact_values(mdp, policy)
    return float(np.asarray(eta) @ V)


def exact_value_and_gradient(mdp: FiniteMdp, policy: Any, eta: np.ndarray) -> StationaryQuantities:
    """
    All exact stationary quantities of one (agent, policy) pair

    The gradient w.r.t. per-state logits is
        dJ/dtheta[s, a] = nu(s) pi(a|s) (Q(s, a) - V(s)) / (1 - gamma)
    and is pulled back to the policy's parameter shape when the policy is tied.

    Args:
        mdp: Agent environment
        policy: SoftmaxPolicy or probability table
        eta: Initial state distribution

    Returns:
        StationaryQuantities
    """
    gamma = mdp.discount
    eta = np.asarray(eta, dtype=float)
    probs = policy_table(policy)

    V, Q = exact_values(mdp, policy)
    nu = discounted_visitation(mdp, policy, eta)
    mu = stationary_distribution(mdp, policy)
    J = float(eta @ V)
    gradJ = nu[:, None] * probs * (Q - V[:, None]) / (1.0 - gamma)

    param_grad = policy.pullback(gradJ) if hasattr(policy, "pullback") else None
    return StationaryQuantities(mu=mu, nu=nu, J=J, gradJ=gradJ, V=V, Q=Q, param_grad=param_grad)
