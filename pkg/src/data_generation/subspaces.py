"""
Random orthogonal subspace pairs.

A pair (A, B) splits R^d into a q-dimensional subspace A, spanned by the
first q columns of the Q factor of a random Gaussian matrix, and its
orthogonal complement B.
"""

from dataclasses import dataclass
import logging

import numpy as np

from src.linalg import Matrix, gaussian_matrix, qr

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 100


@dataclass(frozen=True)
class SubspacePair:
    """
    Orthogonal projections onto a subspace A and its complement B.

    Attributes:
        dim_ambient: Ambient dimension d
        dim_sub: Dimension q of A
        p_a: d x d projection onto A
        p_b: d x d projection onto B, equal to I - p_a
        seed: Seed the pair was built from (after any resampling)
    """
    dim_ambient: int
    dim_sub: int
    p_a: Matrix
    p_b: Matrix
    seed: int = 0


def make_subspace_pair(d: int, q: int, seed: int) -> SubspacePair:
    """
    Build a random pair of complementary projections.

    Samples a d x q Gaussian matrix V, QR-factorizes it and uses the first
    q columns Q_q of Q: p_a = Q_q Q_q^T and p_b = I - p_a. A rank-deficient
    draw (probability zero) is resampled with an incremented seed.
    """
    if not 1 <= q < d:
        raise ValueError(f"Subspace dimension must satisfy 1 <= q < d, got q={q}, d={d}")

    for attempt in range(MAX_RESAMPLES):
        current = seed + attempt
        factor = qr(gaussian_matrix(d, q, current))
        if factor.rank() == q:
            break
        logger.warning("Rank-deficient subspace draw for seed %d, resampling", current)
    else:
        raise RuntimeError(f"Could not draw a rank-{q} subspace after {MAX_RESAMPLES} attempts")

    basis = factor.q[:, :q]
    p_a = basis @ basis.T
    # symmetrize rounding error
    p_a = 0.5 * (p_a + p_a.T)
    p_b = np.eye(d) - p_a
    return SubspacePair(dim_ambient=d, dim_sub=q, p_a=p_a, p_b=p_b, seed=current)
