"""
Markov chains sampled by the agents.

The critic chain follows pi_theta and the agent's own kernel P. The actor chain
follows the companion kernel gamma * P + (1 - gamma) * eta, realized by flipping
a coin with success probability gamma before each transition: on failure the
next state is drawn from eta and the reset is recorded. Both chains keep their
state between rounds.
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from pfedac.agents.policy import SoftmaxPolicy
from pfedac.environments.mdp import FiniteMdp


def sample_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Inverse-CDF draw from a probability vector"""
    index = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(index, probs.shape[0] - 1)


@dataclass
class Trajectory:
    """States s_0..s_L, actions a_0..a_{L-1}, rewards r_0..r_{L-1}"""

    states: List[int]
    actions: List[int]
    rewards: List[float]
    resets: Optional[List[bool]] = None

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def reset_count(self) -> int:
        return sum(self.resets) if self.resets else 0


@dataclass
class CriticChain:
    current_state: int
    rng: np.random.Generator = field(repr=False)

    @classmethod
    def start(cls, eta: np.ndarray, rng: np.random.Generator) -> "CriticChain":
        """s_{0,0} ~ eta"""
        return cls(sample_index(rng, np.asarray(eta)), rng)


@dataclass
class ActorChain:
    current_state: int
    eta: np.ndarray = field(repr=False)
    rng: np.random.Generator = field(repr=False)

    @classmethod
    def start(cls, eta: np.ndarray, rng: np.random.Generator) -> "ActorChain":
        """s^_{0,0} ~ eta"""
        eta = np.asarray(eta, dtype=float)
        return cls(sample_index(rng, eta), eta, rng)


def sample_critic_block(chain: CriticChain, mdp: FiniteMdp, policy: SoftmaxPolicy, L: int) -> Trajectory:
    """
    Run L transitions of pi_theta x P from the chain's current state

    Args:
        chain: Critic chain, advanced in place to s_L
        mdp: Agent's environment
        policy: Current policy
        L: Block length

    Returns:
        Trajectory of the block
    """
    probs = policy.probabilities()
    s = chain.current_state
    states, actions, rewards = [s], [], []
    for _ in range(L):
        a = sample_index(chain.rng, probs[s])
        rewards.append(float(mdp.rewards[s, a]))
        s = sample_index(chain.rng, mdp.transitions[s, a])
        actions.append(a)
        states.append(s)
    chain.current_state = s
    return Trajectory(states, actions, rewards)


def sample_actor_block(chain: ActorChain, mdp: FiniteMdp, policy: SoftmaxPolicy, L: int) -> Trajectory:
    """
    Run L transitions of the companion chain; rewards come from the original table

    Args:
        chain: Actor chain carrying eta, advanced in place to s^_L
        mdp: Agent's original environment (the reset coin supplies the companion kernel)
        policy: Current policy
        L: Block length

    Returns:
        Trajectory with the reset indicator of every transition
    """
    probs = policy.probabilities()
    gamma = mdp.discount
    s = chain.current_state
    states, actions, rewards, resets = [s], [], [], []
    for _ in range(L):
        a = sample_index(chain.rng, probs[s])
        rewards.append(float(mdp.rewards[s, a]))
        reset = chain.rng.random() >= gamma
        if reset:
            s = sample_index(chain.rng, chain.eta)
        else:
            s = sample_index(chain.rng, mdp.transitions[s, a])
        actions.append(a)
        states.append(s)
        resets.append(bool(reset))
    chain.current_state = s
    return Trajectory(states, actions, rewards, resets)
