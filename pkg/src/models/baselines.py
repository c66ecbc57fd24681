"""
Classical in-context regressors.

Each regressor is evaluated autoregressively: the prediction for x_{i+1}
is fitted on the first i pairs only. With no context every trace predicts 0,
the Bayes-optimal guess under the zero-mean task prior.

Every baseline exposes a ``*_predict`` function (fit on a context, predict
one query) and a ``*_trace`` function (run it at every prompt position).
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence
import logging

import numpy as np
from scipy import linalg as sla
from sklearn.metrics.pairwise import rbf_kernel

from src.config import BaselineConfig
from src.data_generation.prompts import Prompt
from src.linalg import make_generator, pinv
from src.models.trace import PredictionTrace, make_trace

logger = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e8

Predictor = Callable[[np.ndarray, np.ndarray, np.ndarray], float]


def _autoregressive(prompt: Prompt, predict: Predictor, model_id: str, xs: Optional[np.ndarray] = None) -> PredictionTrace:
    xs = prompt.xs if xs is None else xs
    preds = np.zeros(prompt.k + 1)
    for i in range(1, prompt.k + 1):
        preds[i] = predict(xs[:i], prompt.ys[:i], xs[i])
    return make_trace(prompt, preds, model_id)


def _prompt_seed(seed: int, prompt: Prompt) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, prompt.seed if prompt.seed is not None else 0])


# =============================================================================
# OLS
# =============================================================================

def ols_predict(X: np.ndarray, y: np.ndarray, x: np.ndarray) -> float:
    """Minimum-norm least squares via the pseudoinverse."""
    beta = pinv(X) @ y
    return float(beta @ x)


def ols_trace(prompt: Prompt) -> PredictionTrace:
    """Autoregressive OLS."""
    return _autoregressive(prompt, ols_predict, "ols")


def ols_projected_inputs_trace(prompt: Prompt, p_a: np.ndarray) -> PredictionTrace:
    """
    OLS after projecting every input (context and query) onto the training
    subspace. Labels are left unchanged and errors are still measured
    against the original targets.
    """
    if p_a.shape != (prompt.d, prompt.d):
        raise ValueError(f"Projection must be {prompt.d}x{prompt.d}, got {p_a.shape}")
    return _autoregressive(prompt, ols_predict, "ols_projected", xs=prompt.xs @ p_a)


# =============================================================================
# Ridge
# =============================================================================

def ridge_coefficients(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """(X^T X + lam I)^{-1} X^T y; lam = 0 falls back to the pseudoinverse."""
    if lam < 0:
        raise ValueError(f"Ridge lambda must be non-negative, got {lam}")
    gram = X.T @ X
    rhs = X.T @ y
    if lam == 0:
        return pinv(gram) @ rhs
    return sla.solve(gram + lam * np.eye(X.shape[1]), rhs, assume_a="pos")


def ridge_predict(X: np.ndarray, y: np.ndarray, x: np.ndarray, lam: float) -> float:
    return float(ridge_coefficients(X, y, lam) @ x)


def ridge_trace(prompt: Prompt, lam: float) -> PredictionTrace:
    """Autoregressive ridge regression."""
    if lam < 0:
        raise ValueError(f"Ridge lambda must be non-negative, got {lam}")
    return _autoregressive(prompt, lambda X, y, x: ridge_predict(X, y, x, lam), "ridge")


# =============================================================================
# Bayesian linear regression
# =============================================================================

def posterior(X: np.ndarray, y: np.ndarray, tau: float, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Gaussian posterior over weights under prior N(0, tau^2 I) and
    likelihood N(X beta, sigma^2 I).

    Returns:
        (mean, covariance); with an empty context this is the prior.
    """
    if tau <= 0 or sigma <= 0:
        raise ValueError(f"tau and sigma must be positive, got {tau}, {sigma}")
    d = X.shape[1]
    precision = X.T @ X / sigma**2 + np.eye(d) / tau**2
    cov = sla.inv(precision)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (X.T @ y) / sigma**2
    return mean, cov


def bayes_predict(
    X: np.ndarray,
    y: np.ndarray,
    x: np.ndarray,
    tau: float,
    sigma: float,
    m: int,
    rng: np.random.Generator,
) -> float:
    """Average of beta^T x over m posterior draws."""
    if m < 1:
        raise ValueError(f"Number of posterior samples must be at least 1, got {m}")
    mean, cov = posterior(X, y, tau, sigma)
    draws = rng.multivariate_normal(mean, cov, size=m, method="cholesky")
    return float(np.mean(draws @ x))


def bayes_trace(prompt: Prompt, tau: float, sigma: float, m: int, seed: int) -> PredictionTrace:
    """Autoregressive Bayesian regression with Monte-Carlo predictive mean."""
    rng = make_generator(_prompt_seed(seed, prompt))
    return _autoregressive(
        prompt, lambda X, y, x: bayes_predict(X, y, x, tau, sigma, m, rng), "bayes"
    )


# =============================================================================
# Kernel ridge
# =============================================================================

def _gamma(kernel_sigma: float) -> float:
    if kernel_sigma <= 0:
        raise ValueError(f"Kernel bandwidth must be positive, got {kernel_sigma}")
    return 1.0 / (2.0 * kernel_sigma**2)


def kernel_ridge_predict(X: np.ndarray, y: np.ndarray, x: np.ndarray, lam: float, kernel_sigma: float) -> float:
    """
    RBF kernel ridge: alpha = (K + lam I)^{-1} y, prediction k(x)^T alpha
    with K_ij = exp(-|x_i - x_j|^2 / (2 sigma^2)).
    """
    if lam <= 0:
        raise ValueError(f"Kernel ridge lambda must be positive, got {lam}")
    gamma = _gamma(kernel_sigma)
    gram = rbf_kernel(X, X, gamma=gamma)
    alpha = sla.solve(gram + lam * np.eye(X.shape[0]), y, assume_a="pos")
    return float(rbf_kernel(x.reshape(1, -1), X, gamma=gamma)[0] @ alpha)


def kernel_ridge_trace(prompt: Prompt, lam: float, kernel_sigma: float) -> PredictionTrace:
    """Autoregressive RBF kernel ridge regression."""
    return _autoregressive(
        prompt, lambda X, y, x: kernel_ridge_predict(X, y, x, lam, kernel_sigma), "kernel_ridge"
    )


# =============================================================================
# Gradient descent
# =============================================================================

def gd_fit(X: np.ndarray, y: np.ndarray, beta0: np.ndarray, eta: float, iters: int) -> tuple[np.ndarray, bool]:
    """
    Minimize |X beta - y|^2 by plain gradient descent from ``beta0``.

    Returns:
        (beta, diverged); iteration stops once |beta| exceeds 1e8
    """
    if eta <= 0:
        raise ValueError(f"Learning rate must be positive, got {eta}")
    if iters < 0:
        raise ValueError(f"Iteration count must be non-negative, got {iters}")
    gram = X.T @ X
    rhs = X.T @ y
    beta = beta0.copy()
    for _ in range(iters):
        beta = beta - 2.0 * eta * (gram @ beta - rhs)
        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > DIVERGENCE_NORM:
            return beta, True
    return beta, False


def gd_trace(prompt: Prompt, eta: float, iters: int, seed: int) -> PredictionTrace:
    """
    Autoregressive gradient descent.

    beta^(0) ~ N(0, I) is drawn once from ``seed`` and every position
    re-fits from it on its own context. A blow-up is reported through
    ``PredictionTrace.diverged``.
    """
    beta0 = make_generator(_prompt_seed(seed, prompt)).standard_normal(prompt.d)
    preds = np.zeros(prompt.k + 1)
    diverged = False
    for i in range(1, prompt.k + 1):
        beta, blew_up = gd_fit(prompt.xs[:i], prompt.ys[:i], beta0, eta, iters)
        if blew_up:
            diverged = True
            preds[i] = np.nan
            continue
        preds[i] = beta @ prompt.xs[i]
    if diverged:
        logger.warning("Gradient descent diverged on prompt %s (eta=%g)", prompt.seed, eta)
    return make_trace(prompt, preds, "gd", diverged=diverged)


# =============================================================================
# Batch evaluation
# =============================================================================

BASELINE_NAMES = ("ols", "ridge", "bayes", "kernel_ridge", "gd")


def run_baseline(name: str, prompt: Prompt, config: BaselineConfig) -> PredictionTrace:
    """Dispatch one baseline by name with hyperparameters from ``config``."""
    if name == "ols":
        return ols_trace(prompt)
    if name == "ridge":
        return ridge_trace(prompt, config.ridge_lambda)
    if name == "bayes":
        return bayes_trace(prompt, config.bayes_tau, config.bayes_sigma, config.bayes_samples, config.seed)
    if name == "kernel_ridge":
        return kernel_ridge_trace(prompt, config.kernel_lambda, config.kernel_bandwidth(prompt.d))
    if name == "gd":
        return gd_trace(prompt, config.gd_eta, config.gd_iters, config.seed)
    raise ValueError(f"Unknown baseline: {name}. Valid baselines: {list(BASELINE_NAMES)}")


def evaluate_baseline(
    name: str,
    prompts: Sequence[Prompt],
    config: BaselineConfig,
    workers: int = 1,
) -> list[PredictionTrace]:
    """
    Traces for a batch of prompts, in prompt order.

    Prompts are independent; ``workers > 1`` evaluates them on a thread pool.
    """
    if workers <= 1:
        return [run_baseline(name, p, config) for p in prompts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: run_baseline(name, p, config), prompts))
