"""
Tabular softmax policies, optionally tied across groups of states
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import softmax

from pfedac.utils.error_handler import DimensionMismatch

# Bound on ||grad log pi(a|s)|| for any softmax over logits
SCORE_BOUND = np.sqrt(2.0)


@dataclass(frozen=True)
class SoftmaxPolicy:
    """
    pi(a|s) = softmax(logits[row_of_state[s]])

    With one parameter row per state this is the plain tabular softmax. On a
    lumpable federation all states of a group share one row, so every reachable
    policy is group-symmetric.
    """

    logits: np.ndarray
    row_of_state: np.ndarray

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        rows = np.array(self.row_of_state, dtype=int)
        logits.setflags(write=False)
        rows.setflags(write=False)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "row_of_state", rows)
        if logits.ndim != 2:
            raise DimensionMismatch(f"logits must be a 2-D table, got shape {logits.shape}")
        if rows.ndim != 1 or rows.min() < 0 or rows.max() >= logits.shape[0]:
            raise DimensionMismatch("row_of_state must map every state to a logits row")
        object.__setattr__(self, "_probs", softmax(logits[rows], axis=1))

    @classmethod
    def uniform(cls, num_states: int, num_actions: int,
                state_groups: Optional[np.ndarray] = None) -> "SoftmaxPolicy":
        """theta_0 = 0, tied to `state_groups` when given"""
        if state_groups is None:
            return cls(np.zeros((num_states, num_actions)), np.arange(num_states))
        groups = np.asarray(state_groups, dtype=int)
        return cls(np.zeros((int(groups.max()) + 1, num_actions)), groups)

    @property
    def num_states(self) -> int:
        return self.row_of_state.shape[0]

    @property
    def num_actions(self) -> int:
        return self.logits.shape[1]

    def probabilities(self) -> np.ndarray:
        """|S| x |A| table of action probabilities"""
        return self._probs

    def action_probs(self, state: int) -> np.ndarray:
        return self._probs[state]

    def log_prob(self, state: int, action: int) -> float:
        return float(np.log(self._probs[state, action]))

    def grad_log(self, state: int, action: int) -> np.ndarray:
        """grad_theta log pi(a|s), shaped like logits; nonzero only on the row of s"""
        grad = np.zeros_like(self.logits)
        row = self.row_of_state[state]
        grad[row] = -self._probs[state]
        grad[row, action] += 1.0
        return grad

    def pullback(self, state_table: np.ndarray) -> np.ndarray:
        """Map a gradient w.r.t. per-state logits to the parameter shape (sum over tied states)"""
        state_table = np.asarray(state_table, dtype=float)
        if state_table.shape != (self.num_states, self.num_actions):
            raise DimensionMismatch(f"expected a {self.num_states}x{self.num_actions} table")
        out = np.zeros_like(self.logits)
        np.add.at(out, self.row_of_state, state_table)
        return out

    def with_logits(self, logits: np.ndarray) -> "SoftmaxPolicy":
        return SoftmaxPolicy(logits, self.row_of_state)
