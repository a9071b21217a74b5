"""
Actor side of one agent: one-step TD errors on the companion chain, the
minibatch score-function gradient and the parameter step.
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from pfedac.agents.chains import Trajectory
from pfedac.agents.policy import SoftmaxPolicy
from pfedac.environments.mdp import FeatureMap


@dataclass
class ActorUpdate:
    deltas: List[float]
    gradient_estimate: np.ndarray
    step: float


def actor_td_errors(trajectory: Trajectory, features: FeatureMap, B: np.ndarray,
                    omega: np.ndarray, gamma: float) -> List[float]:
    """delta_l = r^_l + (gamma phi(s^_{l+1}) - phi(s^_l))^T B omega for l < L"""
    value = features.matrix[trajectory.states] @ (B @ omega)
    return [
        float(r + gamma * value[l + 1] - value[l])
        for l, r in enumerate(trajectory.rewards)
    ]


def policy_gradient_estimate(deltas: List[float], trajectory: Trajectory,
                             policy: SoftmaxPolicy) -> np.ndarray:
    """g = (1 / L) sum_l delta_l grad log pi(a^_l | s^_l), shaped like the logits"""
    L = trajectory.length
    g = np.zeros_like(policy.logits)
    probs = policy.probabilities()
    for delta, s, a in zip(deltas, trajectory.states[:-1], trajectory.actions):
        row = policy.row_of_state[s]
        g[row] -= delta * probs[s]
        g[row, a] += delta
    return g / L


def actor_step(policy: SoftmaxPolicy, g: np.ndarray, alpha: float) -> SoftmaxPolicy:
    """theta' = theta + alpha g"""
    if alpha == 0.0:
        return policy
    return policy.with_logits(policy.logits + alpha * g)


def run_actor(trajectory: Trajectory, features: FeatureMap, B: np.ndarray, omega: np.ndarray,
              policy: SoftmaxPolicy, gamma: float, alpha: float) -> ActorUpdate:
    """TD errors and gradient estimate for one block, bundled for logging"""
    deltas = actor_td_errors(trajectory, features, B, omega, gamma)
    g = policy_gradient_estimate(deltas, trajectory, policy)
    return ActorUpdate(deltas=deltas, gradient_estimate=g, step=alpha)
