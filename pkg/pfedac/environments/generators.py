"""
Generators of heterogeneous federations.

`make_random_federation` draws generic ergodic MDPs with bounded random features.
`make_lumpable_federation` draws MDPs whose dynamics and rewards depend on the
state only through a partition into groups; with identity features every value
function of a group-level policy is constant within groups, so all TD fixed
points lie in the span of the normalized group indicators.
"""
import logging
from typing import Optional

import numpy as np

from pfedac.environments.mdp import Federation, FeatureMap, FiniteMdp
from pfedac.utils.error_handler import InvalidValue
from pfedac.utils.seeding import stream

logger = logging.getLogger(__name__)

# Weight of the uniform distribution mixed into every sampled transition row
MIXING_FLOOR = 0.05


def _floored_dirichlet(rng: np.random.Generator, size: int, shape: tuple) -> np.ndarray:
    rows = rng.dirichlet(np.ones(size), size=shape)
    rows = (1.0 - MIXING_FLOOR) * rows + MIXING_FLOOR / size
    return rows / rows.sum(axis=-1, keepdims=True)


def _agent_stream(seed: int, k: int, agent_pool: Optional[int]) -> np.random.Generator:
    return stream(seed, "agent_environment", k if agent_pool is None else k % agent_pool)


def _check_common(num_actions: int, K: int, gamma: float, reward_bound: float,
                  agent_pool: Optional[int] = None):
    if num_actions < 1 or K < 1:
        raise InvalidValue("num_actions and K must be at least 1")
    if agent_pool is not None and agent_pool < 1:
        raise InvalidValue(f"agent_pool must be at least 1, got {agent_pool}")
    if not 0.0 < gamma < 1.0:
        raise InvalidValue(f"gamma must lie in (0, 1), got {gamma}")
    if reward_bound <= 0:
        raise InvalidValue(f"reward_bound must be positive, got {reward_bound}")


def make_random_federation(num_states: int, num_actions: int, K: int, gamma: float,
                           reward_bound: float, seed: int,
                           feature_dim: Optional[int] = None,
                           agent_pool: Optional[int] = None) -> Federation:
    """
    Draw K ergodic MDPs over a shared state space with bounded random features

    Args:
        num_states: |S|
        num_actions: |A|
        K: Number of agents
        gamma: Discount factor
        reward_bound: U_r, rewards are uniform in [-U_r, U_r]
        seed: Root seed; agent k only uses its own stream so K agents are a prefix of K+1
        feature_dim: d, defaults to |S|
        agent_pool: When set, agent k reuses the MDP of agent k mod agent_pool

    Returns:
        Federation without a ground-truth subspace
    """
    _check_common(num_actions, K, gamma, reward_bound, agent_pool)
    if num_states < 1:
        raise InvalidValue("num_states must be at least 1")
    d = num_states if feature_dim is None else int(feature_dim)
    if d < 1:
        raise InvalidValue("feature_dim must be at least 1")

    shared_rng = stream(seed, "environment")
    raw = shared_rng.standard_normal((num_states, d))
    features = raw / np.max(np.linalg.norm(raw, axis=1))
    eta = np.full(num_states, 1.0 / num_states)

    agents = []
    for k in range(K):
        rng = _agent_stream(seed, k, agent_pool)
        transitions = _floored_dirichlet(rng, num_states, (num_states, num_actions))
        rewards = rng.uniform(-reward_bound, reward_bound, size=(num_states, num_actions))
        agents.append(FiniteMdp(transitions, rewards, gamma, reward_bound))

    logger.debug(f"Generated random federation: |S|={num_states}, |A|={num_actions}, K={K}, d={d}")
    return Federation(
        agents=agents,
        features=FeatureMap(features),
        initial_dist=eta,
        metadata={
            "generator": "random",
            "num_states": num_states,
            "num_actions": num_actions,
            "K": K,
            "gamma": gamma,
            "reward_bound": reward_bound,
            "feature_dim": d,
            "seed": seed,
            "agent_pool": agent_pool,
        },
    )


def group_indicator_basis(num_groups: int, states_per_group: int) -> np.ndarray:
    """Orthonormalized group indicators: column g is 1/sqrt(n) on the states of group g"""
    basis = np.zeros((num_groups * states_per_group, num_groups))
    for g in range(num_groups):
        basis[g * states_per_group:(g + 1) * states_per_group, g] = 1.0 / np.sqrt(states_per_group)
    return basis


def make_lumpable_federation(num_groups: int, states_per_group: int, num_actions: int, K: int,
                             gamma: float, reward_bound: float, seed: int,
                             group_persistence: float = 0.0,
                             agent_pool: Optional[int] = None) -> Federation:
    """
    Draw K group-lumpable MDPs with tabular identity features

    Each agent has its own group-level kernel G^k[g, a, g'] and within-group landing
    weights w^k[g', s'], so P^k[s, a, s'] = G^k[group(s), a, group(s')] * w^k[s'].
    Rewards R^k[s, a] = R^k_group[group(s), a].
    A positive group_persistence rho replaces G^k by rho I + (1 - rho) G^k, which
    stretches the value gap between groups.

    Args:
        num_groups: r
        states_per_group: Number of states in every group
        num_actions: |A|
        K: Number of agents
        gamma: Discount factor
        reward_bound: U_r
        seed: Root seed
        group_persistence: rho in [0, 1), 0 keeps the drawn group kernels
        agent_pool: When set, agent k reuses the MDP of agent k mod agent_pool

    Returns:
        Federation carrying B_star and the state partition
    """
    _check_common(num_actions, K, gamma, reward_bound, agent_pool)
    if num_groups < 1 or states_per_group < 1:
        raise InvalidValue("num_groups and states_per_group must be at least 1")
    if not 0.0 <= group_persistence < 1.0:
        raise InvalidValue(f"group_persistence must lie in [0, 1), got {group_persistence}")

    num_states = num_groups * states_per_group
    groups = np.repeat(np.arange(num_groups), states_per_group)
    eta = np.full(num_states, 1.0 / num_states)

    agents = []
    for k in range(K):
        rng = _agent_stream(seed, k, agent_pool)
        group_kernel = _floored_dirichlet(rng, num_groups, (num_groups, num_actions))
        landing = _floored_dirichlet(rng, states_per_group, (num_groups,)).reshape(num_states)
        group_rewards = rng.uniform(-reward_bound, reward_bound, size=(num_groups, num_actions))
        if group_persistence > 0.0:
            group_kernel = group_persistence * np.eye(num_groups)[:, None, :] + (1.0 - group_persistence) * group_kernel

        transitions = group_kernel[groups][:, :, groups] * landing[None, None, :]
        transitions = transitions / transitions.sum(axis=2, keepdims=True)
        agents.append(FiniteMdp(transitions, group_rewards[groups], gamma, reward_bound))

    logger.debug(f"Generated lumpable federation: r={num_groups}, |S|={num_states}, K={K}")
    return Federation(
        agents=agents,
        features=FeatureMap(np.eye(num_states)),
        initial_dist=eta,
        B_star=group_indicator_basis(num_groups, states_per_group),
        state_groups=groups,
        metadata={
            "generator": "lumpable",
            "num_groups": num_groups,
            "states_per_group": states_per_group,
            "num_actions": num_actions,
            "K": K,
            "gamma": gamma,
            "reward_bound": reward_bound,
            "seed": seed,
            "group_persistence": group_persistence,
            "agent_pool": agent_pool,
        },
    )


def generate_federation(config, K: Optional[int] = None) -> Federation:
    """
    Federation described by a RunConfig, with K agents (defaults to config.K)

    Agent k always comes from stream(seed, agent_environment, k), or k mod agent_pool, so the
    federation for a smaller K is a prefix of the one for a larger K.
    """
    K = config.K if K is None else K
    if config.env == "lumpable":
        return make_lumpable_federation(
            config.num_groups, config.states_per_group, config.num_actions, K,
            config.gamma, config.U_r, config.seed,
            group_persistence=config.group_persistence, agent_pool=config.agent_pool,
        )
    return make_random_federation(
        config.num_states, config.num_actions, K, config.gamma, config.U_r, config.seed,
        feature_dim=config.feature_dim, agent_pool=config.agent_pool,
    )
