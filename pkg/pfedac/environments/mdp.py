"""
Finite MDPs, feature maps and federations of heterogeneous agents
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from pfedac.utils.error_handler import DimensionMismatch, FederationFormatError, InvalidValue

logger = logging.getLogger(__name__)

FEDERATION_FORMAT_VERSION = 1
STOCHASTIC_TOL = 1e-12
ORTHONORMAL_TOL = 1e-10


def _frozen(array: Any) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FiniteMdp:
    """One agent's environment: P[s, a, s'], R[s, a], discount and reward bound"""

    transitions: np.ndarray
    rewards: np.ndarray
    discount: float
    reward_bound: float

    def __post_init__(self):
        object.__setattr__(self, "transitions", _frozen(self.transitions))
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        P, R = self.transitions, self.rewards

        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
            raise DimensionMismatch(f"transitions must have shape |S|x|A|x|S|, got {P.shape}")
        if R.shape != P.shape[:2]:
            raise DimensionMismatch(f"rewards must have shape {P.shape[:2]}, got {R.shape}")
        if np.any(P < 0):
            raise InvalidValue("transition tensor has negative entries")
        row_error = np.max(np.abs(P.sum(axis=2) - 1.0))
        if row_error > STOCHASTIC_TOL:
            raise InvalidValue(f"transition rows do not sum to 1 (max error {row_error:.3e})")
        if not 0.0 < self.discount < 1.0:
            raise InvalidValue(f"discount must lie in (0, 1), got {self.discount}")
        if self.reward_bound <= 0:
            raise InvalidValue(f"reward_bound must be positive, got {self.reward_bound}")
        if np.max(np.abs(R)) > self.reward_bound:
            raise InvalidValue("rewards exceed reward_bound")

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "discount": self.discount,
            "reward_bound": self.reward_bound,
        }


@dataclass(frozen=True)
class FeatureMap:
    """The map phi: row s of `matrix` is phi(s), every row norm at most 1"""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        if self.matrix.ndim != 2:
            raise DimensionMismatch(f"feature matrix must be 2-D, got shape {self.matrix.shape}")
        # 1e-12 absorbs the rounding of the rescaling done by the generators
        if self.max_norm() > 1.0 + 1e-12:
            raise InvalidValue(f"feature norms exceed 1 (max {self.max_norm():.6f})")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def num_states(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, state: int) -> np.ndarray:
        return self.matrix[state]

    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.matrix, axis=1)))


@dataclass(frozen=True)
class Federation:
    """K agents sharing |S|, |A|, gamma and the feature map; transitions differ per agent"""

    agents: List[FiniteMdp]
    features: FeatureMap
    initial_dist: np.ndarray
    B_star: Optional[np.ndarray] = None
    state_groups: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", list(self.agents))
        object.__setattr__(self, "initial_dist", _frozen(self.initial_dist))
        if not self.agents:
            raise InvalidValue("a federation needs at least one agent")

        first = self.agents[0]
        for k, mdp in enumerate(self.agents):
            if (mdp.num_states, mdp.num_actions) != (first.num_states, first.num_actions):
                raise DimensionMismatch(f"agent {k} has a different state/action space")
            if mdp.discount != first.discount:
                raise InvalidValue(f"agent {k} has a different discount")
        if self.features.num_states != first.num_states:
            raise DimensionMismatch("feature map rows do not match |S|")

        eta = self.initial_dist
        if eta.shape != (first.num_states,) or np.any(eta < 0) or abs(eta.sum() - 1.0) > STOCHASTIC_TOL:
            raise InvalidValue("initial_dist must be a probability vector over |S|")

        if self.B_star is not None:
            object.__setattr__(self, "B_star", _frozen(self.B_star))
            if self.B_star.shape[0] != self.features.dim:
                raise DimensionMismatch("B_star must have d rows")
            gram_error = np.max(np.abs(self.B_star.T @ self.B_star - np.eye(self.B_star.shape[1])))
            if gram_error > ORTHONORMAL_TOL:
                raise InvalidValue(f"B_star is not orthonormal (error {gram_error:.3e})")

        if self.state_groups is not None:
            groups = np.array(self.state_groups, dtype=int)
            groups.setflags(write=False)
            object.__setattr__(self, "state_groups", groups)
            if groups.shape != (first.num_states,):
                raise DimensionMismatch("state_groups must label every state")

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def num_states(self) -> int:
        return self.agents[0].num_states

    @property
    def num_actions(self) -> int:
        return self.agents[0].num_actions

    @property
    def discount(self) -> float:
        return self.agents[0].discount

    @property
    def reward_bound(self) -> float:
        return max(mdp.reward_bound for mdp in self.agents)

    @property
    def num_groups(self) -> Optional[int]:
        if self.state_groups is None:
            return None
        return int(self.state_groups.max()) + 1

    def prefix(self, num_agents: int) -> "Federation":
        """The federation made of the first `num_agents` agents"""
        metadata = dict(self.metadata)
        metadata["K"] = num_agents
        return Federation(
            agents=self.agents[:num_agents],
            features=self.features,
            initial_dist=self.initial_dist,
            B_star=self.B_star,
            state_groups=self.state_groups,
            metadata=metadata,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": FEDERATION_FORMAT_VERSION,
            "metadata": self.metadata,
            "initial_dist": self.initial_dist.tolist(),
            "features": self.features.matrix.tolist(),
            "B_star": None if self.B_star is None else self.B_star.tolist(),
            "state_groups": None if self.state_groups is None else self.state_groups.tolist(),
            "agents": [mdp.to_dict() for mdp in self.agents],
        }

    def content_hash(self) -> str:
        """sha256 over the canonical JSON document"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def federation_from_dict(document: Dict[str, Any]) -> Federation:
    """Rebuild a Federation from its JSON document"""
    version = document.get("version")
    if version != FEDERATION_FORMAT_VERSION:
        raise FederationFormatError(f"unsupported federation format version: {version}")
    try:
        agents = [
            FiniteMdp(
                transitions=np.array(agent["transitions"], dtype=float),
                rewards=np.array(agent["rewards"], dtype=float),
                discount=float(agent["discount"]),
                reward_bound=float(agent["reward_bound"]),
            )
            for agent in document["agents"]
        ]
        return Federation(
            agents=agents,
            features=FeatureMap(np.array(document["features"], dtype=float)),
            initial_dist=np.array(document["initial_dist"], dtype=float),
            B_star=None if document.get("B_star") is None else np.array(document["B_star"], dtype=float),
            state_groups=None if document.get("state_groups") is None else np.array(document["state_groups"]),
            metadata=document.get("metadata", {}),
        )
    except KeyError as e:
        raise FederationFormatError(f"federation document is missing field {e}")


def save_federation(federation: Federation, path: str) -> Path:
    """Write the federation as a self-describing JSON document"""
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as f:
        json.dump(federation.to_dict(), f)
    logger.debug(f"Federation written to {out_path}")
    return out_path


def load_federation(path: str) -> Federation:
    """Load a federation written by save_federation, bit-exactly"""
    try:
        with open(path, "r") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise FederationFormatError(f"federation file {path} is not valid JSON: {e}")
    return federation_from_dict(document)


def mix_with_reset(transitions: np.ndarray, eta: np.ndarray, gamma: float) -> np.ndarray:
    """gamma * P[s, a, :] + (1 - gamma) * eta for every (s, a)"""
    return gamma * np.asarray(transitions) + (1.0 - gamma) * np.asarray(eta)[None, None, :]


def companion_kernel(mdp: FiniteMdp, eta: np.ndarray) -> FiniteMdp:
    """
    The companion MDP used by the actor: with probability gamma follow P,
    otherwise reset to eta. Rewards and discount are unchanged.

    Args:
        mdp: Original environment
        eta: Initial state distribution

    Returns:
        FiniteMdp with the mixed kernel
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (mdp.num_states,):
        raise DimensionMismatch(f"eta must have length {mdp.num_states}")
    mixed = mix_with_reset(mdp.transitions, eta, mdp.discount)
    # Renormalize to keep rows stochastic to the last ulp
    mixed = mixed / mixed.sum(axis=2, keepdims=True)
    return FiniteMdp(
        transitions=mixed,
        rewards=mdp.rewards,
        discount=mdp.discount,
        reward_bound=mdp.reward_bound,
    )
