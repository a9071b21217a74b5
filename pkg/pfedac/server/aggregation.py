"""
Server-side linear algebra: averaging of local subspace proposals, QR
re-orthonormalization with a pinned sign convention, and the principal angle
distance to the ground-truth subspace.
"""
import logging
from typing import NamedTuple, Sequence, Tuple

import numpy as np
from scipy import linalg

from pfedac.utils.error_handler import DimensionMismatch, RankDeficientAggregate

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10


class AggregateResult(NamedTuple):
    B_next: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    q_frob: float


def signed_qr(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Thin QR with diag(R) >= 0"""
    Q, R = linalg.qr(matrix, mode="economic")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs[None, :], R * signs[:, None]


def random_orthonormal(rng: np.random.Generator, d: int, r: int) -> np.ndarray:
    """B_0: QR of a standard Gaussian d x r matrix"""
    Q, _ = signed_qr(rng.standard_normal((d, r)))
    return Q


def aggregate_and_qr(B: np.ndarray, local_proposals: Sequence[np.ndarray]) -> AggregateResult:
    """
    Average the agents' proposals B + Delta B^k and re-orthonormalize

    The sum runs in agent-index order so the result does not depend on how the
    agents were scheduled.

    Args:
        B: Current broadcast basis B_t
        local_proposals: One d x r proposal per agent, in agent order

    Returns:
        AggregateResult with B_{t+1}, R_{t+1}, Q_t = mean(proposals) - B_t and ||Q_t||_F

    Raises:
        RankDeficientAggregate: R has a diagonal entry below 1e-10
    """
    if not local_proposals:
        raise DimensionMismatch("no local proposals to aggregate")
    total = np.zeros_like(B)
    for proposal in local_proposals:
        if proposal.shape != B.shape:
            raise DimensionMismatch(f"proposal shape {proposal.shape} does not match {B.shape}")
        total = total + (proposal - B)
    Q = total / len(local_proposals)
    if not np.any(Q):
        return AggregateResult(B_next=B.copy(), R=np.eye(B.shape[1]), Q=Q, q_frob=0.0)
    B_bar = B + Q

    B_next, R = signed_qr(B_bar)
    smallest = float(np.min(np.abs(np.diag(R))))
    if smallest < RANK_TOL:
        raise RankDeficientAggregate(
            f"averaged subspace is rank-deficient (min |R_ii| = {smallest:.3e})",
            {"min_diag_R": smallest, "q_frob": float(np.linalg.norm(Q))},
        )
    return AggregateResult(B_next=B_next, R=R, Q=Q, q_frob=float(np.linalg.norm(Q)))


def qr_perturbation(R: np.ndarray) -> dict:
    """||R - I||, ||R^{-1}|| and ||R^{-1} - I|| in spectral norm"""
    identity = np.eye(R.shape[0])
    R_inv = linalg.solve_triangular(R, identity)
    return {
        "r_dev": float(np.linalg.norm(R - identity, 2)),
        "r_inv_norm": float(np.linalg.norm(R_inv, 2)),
        "r_inv_dev": float(np.linalg.norm(R_inv - identity, 2)),
    }


def principal_angle_distance(B: np.ndarray, B_star: np.ndarray) -> Tuple[float, float]:
    """
    m = (I - B* B*^T) B

    Returns:
        (||m||_F^2 in [0, r], ||m||_2 in [0, 1])
    """
    if B.shape[0] != B_star.shape[0]:
        raise DimensionMismatch(f"B has {B.shape[0]} rows but B_star has {B_star.shape[0]}")
    m = B - B_star @ (B_star.T @ B)
    frob_sq = float(np.clip(np.sum(m ** 2), 0.0, B.shape[1]))
    spectral = float(np.clip(np.linalg.norm(m, 2), 0.0, 1.0))
    return frob_sq, spectral


def proxy_subspace(fixed_points: np.ndarray, r: int) -> np.ndarray:
    """Top-r left singular vectors of Z*, the stand-in for B* when it is unknown"""
    U, _, _ = linalg.svd(fixed_points, full_matrices=False)
    return U[:, :r]


def orthonormality_error(B: np.ndarray) -> float:
    return float(np.max(np.abs(B.T @ B - np.eye(B.shape[1]))))
