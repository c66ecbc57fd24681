"""
Functional probes of a trained in-context regressor.
"""

from dataclasses import dataclass
import logging

import numpy as np

from src.data_generation.prompts import Prompt
from src.linalg import matrix_rank, pinv
from src.models.transformer import QueryPredictor

logger = logging.getLogger(__name__)


@dataclass
class ImplicitWeight:
    """
    Linear weight implied by a model's answers on a fixed context.

    Attributes:
        beta: Estimated d-vector
        predictions: Model predictions for each estimate query
        rank_deficient: True when the estimate queries do not span R^d
    """
    beta: np.ndarray
    predictions: np.ndarray
    rank_deficient: bool = False

    def projected_norms(self, p_a: np.ndarray, p_b: np.ndarray) -> tuple[float, float]:
        """Norms of the estimate inside each of two complementary subspaces."""
        return float(np.linalg.norm(p_a @ self.beta)), float(np.linalg.norm(p_b @ self.beta))


def implicit_weight(model: QueryPredictor, context_prompt: Prompt, queries: np.ndarray) -> ImplicitWeight:
    """
    Estimate the weight vector a model applies in context.

    The prompt's k context pairs are kept fixed and each query row is
    appended as the final input. The least-squares fit of the model's
    predictions against the queries, pinv(X_q) y_hat, is the estimate.

    Args:
        model: Anything with ``predict_queries``
        context_prompt: Prompt whose first k pairs form the context
        queries: n x d estimate inputs

    Returns:
        ImplicitWeight

    Example:
        >>> estimate = implicit_weight(model, prompt, gaussian_matrix(16, 8, seed=3))
        >>> estimate.projected_norms(pair.p_a, pair.p_b)
    """
    d = context_prompt.d
    if context_prompt.k <= d:
        raise ValueError(f"Context must hold more than d={d} examples, got {context_prompt.k}")
    if queries.ndim != 2 or queries.shape[1] != d:
        raise ValueError(f"Queries must be n x {d}, got shape {queries.shape}")
    if queries.shape[0] < d:
        raise ValueError(f"Need at least d={d} queries, got {queries.shape[0]}")

    context_xs = context_prompt.xs[:-1]
    context_ys = context_prompt.ys[:-1]
    predictions = np.asarray(model.predict_queries(context_xs, context_ys, queries), dtype=np.float64)

    rank_deficient = matrix_rank(queries) < d
    if rank_deficient:
        logger.warning("Probe queries have rank below d=%d; estimate is the minimum-norm solution", d)
    beta = pinv(queries) @ predictions
    return ImplicitWeight(beta=beta, predictions=predictions, rank_deficient=rank_deficient)
