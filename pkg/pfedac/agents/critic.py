"""
Critic side of one agent: TD(L) error, projected head update and the
innovation-projected local subspace increment.

The per-sample identities

    delta * phi(s_0) = A~ x + b_{t,L}            (fixed-point form)
    delta * phi(s_0) = xi + A_L x                (Markovian-noise form)

with x = B omega - z* are exposed through td_feature_decomposition_check.
"""
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from pfedac.agents.chains import Trajectory
from pfedac.environments.mdp import FeatureMap


def delta_bound(reward_bound: float, radius: float) -> float:
    """U_delta = U_r + 2 U_omega"""
    return reward_bound + 2.0 * radius


@dataclass
class CriticParams:
    omega: np.ndarray
    radius: Optional[float]
    head_step: float
    subspace_step: float


@dataclass
class TdSample:
    trajectory: Trajectory
    delta_L: float
    td_feature: np.ndarray


class HeadUpdate(NamedTuple):
    omega: np.ndarray
    clamped: bool


class DecompositionResidual(NamedTuple):
    fixed_point_form: float
    markov_noise_form: float
    xi: np.ndarray


def discounted_return(rewards, gamma: float) -> float:
    return float(sum(gamma ** l * r for l, r in enumerate(rewards)))


def td_l_error(trajectory: Trajectory, features: FeatureMap, B: np.ndarray,
               omega: np.ndarray, gamma: float) -> TdSample:
    """
    Endpoint form: sum_l gamma^l r_l + (gamma^L phi(s_L) - phi(s_0))^T B omega

    Args:
        trajectory: Critic block of length L
        features: Feature map
        B: d x r orthonormal basis
        omega: Head
        gamma: Discount

    Returns:
        TdSample with delta_L and delta_L * phi(s_0)
    """
    L = trajectory.length
    phi_0 = features(trajectory.states[0])
    phi_L = features(trajectory.states[-1])
    value_dir = B @ omega
    delta = discounted_return(trajectory.rewards, gamma) + float((gamma ** L * phi_L - phi_0) @ value_dir)
    return TdSample(trajectory=trajectory, delta_L=delta, td_feature=delta * phi_0)


def td_l_error_telescoped(trajectory: Trajectory, features: FeatureMap, B: np.ndarray,
                          omega: np.ndarray, gamma: float) -> float:
    """Per-step form: sum_l gamma^l (r_l + (gamma phi(s_{l+1}) - phi(s_l))^T B omega)"""
    value = features.matrix[trajectory.states] @ (B @ omega)
    return float(sum(
        gamma ** l * (r + gamma * value[l + 1] - value[l])
        for l, r in enumerate(trajectory.rewards)
    ))


def project_to_ball(vector: np.ndarray, radius: float) -> HeadUpdate:
    """Euclidean projection onto the ball of the given radius"""
    norm = float(np.linalg.norm(vector))
    if norm > radius:
        return HeadUpdate(vector * (radius / norm), True)
    return HeadUpdate(vector, False)


def head_update(params: CriticParams, sample: TdSample, B: np.ndarray) -> HeadUpdate:
    """omega' = Proj_{U_omega}(omega + (beta / L) delta B^T phi(s_0)); no projection when radius is None"""
    L = sample.trajectory.length
    candidate = params.omega + (params.head_step / L) * (B.T @ sample.td_feature)
    if params.radius is None:
        return HeadUpdate(candidate, False)
    return project_to_ball(candidate, params.radius)


def local_subspace_update(B: np.ndarray, sample: TdSample, omega: np.ndarray,
                          subspace_step: float) -> np.ndarray:
    """
    Delta B = (zeta / L) (I - B B^T) delta phi(s_0) omega^T

    The complement projector is applied as v - B (B^T v); B_perp is never built.
    """
    L = sample.trajectory.length
    v = sample.td_feature
    innovation = v - B @ (B.T @ v)
    return (subspace_step / L) * np.outer(innovation, omega)


def markov_drift(trajectory: Trajectory, features: FeatureMap, gamma: float) -> np.ndarray:
    """A~ = phi(s_0) (gamma^L phi(s_L) - phi(s_0))^T"""
    L = trajectory.length
    phi_0 = features(trajectory.states[0])
    phi_L = features(trajectory.states[-1])
    return np.outer(phi_0, gamma ** L * phi_L - phi_0)


def reward_feature(trajectory: Trajectory, features: FeatureMap, gamma: float) -> np.ndarray:
    """b~ = sum_l gamma^l r_l phi(s_0)"""
    return discounted_return(trajectory.rewards, gamma) * features(trajectory.states[0])


def reference_td_target(trajectory: Trajectory, features: FeatureMap, z_star: np.ndarray,
                        gamma: float) -> np.ndarray:
    """b_{t,L}: the TD feature of the block evaluated at the fixed point z*"""
    L = trajectory.length
    phi_0 = features(trajectory.states[0])
    phi_L = features(trajectory.states[-1])
    delta_star = discounted_return(trajectory.rewards, gamma) + float((gamma ** L * phi_L - phi_0) @ z_star)
    return delta_star * phi_0


def td_feature_decomposition_check(sample: TdSample, features: FeatureMap, B: np.ndarray,
                                   omega: np.ndarray, z_star: np.ndarray, A_L: np.ndarray,
                                   b_bar: np.ndarray, gamma: float) -> DecompositionResidual:
    """
    Residuals of both TD feature rewrites for one sample

    Args:
        sample: TD sample computed with (B, omega)
        features: Feature map
        B: Basis used for the sample
        omega: Head used for the sample
        z_star: Exact TD(L) fixed point at the sampling policy
        A_L: Exact A_{L, theta}
        b_bar: Exact b_bar_{L, theta}
        gamma: Discount

    Returns:
        DecompositionResidual with both residual norms and the Markovian noise xi
    """
    trajectory = sample.trajectory
    value_dir = B @ omega
    x = value_dir - z_star
    A_tilde = markov_drift(trajectory, features, gamma)
    b_t = reference_td_target(trajectory, features, z_star, gamma)
    xi = reward_feature(trajectory, features, gamma) - b_bar + (A_tilde - A_L) @ value_dir

    fixed_point_form = float(np.linalg.norm(sample.td_feature - (A_tilde @ x + b_t)))
    markov_noise_form = float(np.linalg.norm(sample.td_feature - (xi + A_L @ x)))
    return DecompositionResidual(fixed_point_form, markov_noise_form, xi)
