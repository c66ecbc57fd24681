"""
Out-of-distribution detection from signature coordinates.

A bivariate Gaussian is fitted to the first two signature coordinates
(c_1, c_2) of in-distribution prompts. A prompt is accepted when its
squared Mahalanobis distance to the fit is within the chi-square (df=2)
quantile at the chosen confidence. Repeating the fit on resampled subsets
gives the mean and spread of the inclusion rate on held-out
in-distribution and shifted prompts.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence
import logging

import numpy as np
import pandas as pd
from scipy.spatial.distance import mahalanobis

from src.analysis.spectra import CanonicalBasis, SignatureVector, collect, signatures
from src.config import DetectorConfig, SourceTag
from src.data_generation.prompts import Prompt
from src.errors import DegenerateFitError
from src.linalg import chi2_quantile_df2, make_generator
from src.models.transformer import RegressionTransformer

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 3
MAX_RESAMPLES = 10
# Smallest eigenvalue of the fitted covariance, relative to the largest
DEGENERACY_RATIO = 1e-12


@dataclass
class GaussianRegion:
    """
    Confidence region of a fitted bivariate Gaussian.

    Attributes:
        mu: Sample mean of the fit samples
        sigma: Population covariance (1/n normalization)
        confidence: Confidence level of the region
        threshold: Squared-Mahalanobis cutoff, -2 ln(1 - confidence)
    """
    mu: np.ndarray
    sigma: np.ndarray
    confidence: float
    threshold: float

    @property
    def precision(self) -> np.ndarray:
        return np.linalg.inv(self.sigma)

    def distance2(self, samples: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distance of each row of ``samples``."""
        diff = np.atleast_2d(samples) - self.mu
        return np.einsum("ni,ij,nj->n", diff, self.precision, diff)

    def inclusion_pct(self, samples: np.ndarray) -> float:
        """Percentage of rows inside the region."""
        if len(samples) == 0:
            raise ValueError("Cannot measure inclusion on an empty sample")
        return float(100.0 * np.mean(self.distance2(samples) <= self.threshold))


def fit_region(samples: np.ndarray, confidence: float = 0.95) -> GaussianRegion:
    """
    Fit mean and population covariance to 2-D samples.

    Raises:
        DegenerateFitError: If the covariance is singular
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError(f"Samples must be n x 2, got shape {samples.shape}")
    if samples.shape[0] < MIN_FIT_SAMPLES:
        raise ValueError(f"Need at least {MIN_FIT_SAMPLES} samples, got {samples.shape[0]}")

    mu = samples.mean(axis=0)
    sigma = np.cov(samples, rowvar=False, bias=True)
    sigma = 0.5 * (sigma + sigma.T)
    eigvals = np.linalg.eigvalsh(sigma)
    if eigvals[-1] <= 0 or eigvals[0] <= DEGENERACY_RATIO * eigvals[-1]:
        raise DegenerateFitError(f"Fitted covariance is singular (eigenvalues {eigvals})")

    return GaussianRegion(mu=mu, sigma=sigma, confidence=confidence, threshold=chi2_quantile_df2(confidence))


def contains(region: GaussianRegion, c2: np.ndarray) -> bool:
    """True iff (c - mu)^T Sigma^{-1} (c - mu) <= threshold."""
    distance = mahalanobis(np.asarray(c2, dtype=np.float64), region.mu, region.precision)
    return bool(distance ** 2 <= region.threshold)


@dataclass
class DetectorReport:
    """
    Inclusion rate of one evaluation source over repeated trials.

    Attributes:
        source: Evaluation distribution
        fit_source: Distribution the region was fitted on
        inclusion_pct_mean: Mean inclusion percentage
        inclusion_pct_std: Population std over trials (0 for one trial)
        trials: Number of completed trials
        fit_size: Prompts per fit
        eval_size: Prompts per evaluation set
        degenerate_fits: Fits rejected as singular and resampled
        model_id: Model the signatures came from
    """
    source: SourceTag
    fit_source: SourceTag
    inclusion_pct_mean: float
    inclusion_pct_std: float
    trials: int
    fit_size: int
    eval_size: int
    degenerate_fits: int = 0
    model_id: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["source"] = self.source.value
        out["fit_source"] = self.fit_source.value
        return out

    def __str__(self) -> str:
        return f"{self.inclusion_pct_mean:.2f}% ± {self.inclusion_pct_std:.2f}%"


def head_coordinates(sigs: Sequence[SignatureVector]) -> np.ndarray:
    """(n, 2) array of (c_1, c_2)."""
    return np.stack([s.c[:2] for s in sigs])


def _subsample(rng: np.random.Generator, pool: np.ndarray, size: int) -> np.ndarray:
    if size > len(pool):
        raise ValueError(f"Cannot draw {size} samples from a pool of {len(pool)}")
    return pool[rng.choice(len(pool), size=size, replace=False)]


def _run_trial(
    trial: int,
    fit_pool: np.ndarray,
    eval_pools: Sequence[np.ndarray],
    config: DetectorConfig,
    seed: int,
) -> tuple[list[float], int]:
    for attempt in range(MAX_RESAMPLES):
        rng = make_generator(np.random.SeedSequence([seed, trial, attempt]))
        fit = _subsample(rng, fit_pool, config.fit_size)
        try:
            region = fit_region(fit, config.confidence)
        except DegenerateFitError:
            logger.warning("Degenerate fit in trial %d (attempt %d); resampling", trial, attempt)
            continue
        rates = [region.inclusion_pct(_subsample(rng, pool, config.eval_size)) for pool in eval_pools]
        return rates, attempt
    raise DegenerateFitError(f"Trial {trial}: {MAX_RESAMPLES} consecutive degenerate fits")


def detector_trials(
    fit_pool: np.ndarray,
    eval_pools: dict[SourceTag, np.ndarray],
    config: DetectorConfig,
    seed: int,
    fit_source: SourceTag = SourceTag.TRAINING_SUBSPACE,
    model_id: str = "",
    workers: int = 1,
) -> dict[SourceTag, DetectorReport]:
    """
    Repeated fit-then-measure on (c_1, c_2) coordinates.

    Each trial fits on ``fit_size`` rows drawn from ``fit_pool`` and
    measures inclusion on ``eval_size`` rows drawn from every evaluation
    pool, all with a per-trial seed. Trials run in any order; results are
    aggregated in trial order.
    """
    sources = list(eval_pools)
    pools = [eval_pools[s] for s in sources]

    def run(trial: int):
        return _run_trial(trial, fit_pool, pools, config, seed)

    if workers <= 1:
        outcomes = [run(t) for t in range(config.trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, range(config.trials)))

    rates = np.array([rates for rates, _ in outcomes])
    degenerate = int(sum(attempts for _, attempts in outcomes))

    reports = {}
    for j, source in enumerate(sources):
        reports[source] = DetectorReport(
            source=source,
            fit_source=fit_source,
            inclusion_pct_mean=float(rates[:, j].mean()),
            inclusion_pct_std=float(rates[:, j].std()),
            trials=config.trials,
            fit_size=config.fit_size,
            eval_size=config.eval_size,
            degenerate_fits=degenerate,
            model_id=model_id,
        )
    return reports


def detector_trial(
    model: RegressionTransformer,
    basis: CanonicalBasis,
    fit_prompts: Sequence[Prompt],
    eval_prompts_id: Sequence[Prompt],
    eval_prompts_ood: Sequence[Prompt],
    config: DetectorConfig,
    seed: int,
    model_id: str = "",
    ood_source: SourceTag = SourceTag.ORTHOGONAL,
    workers: int = 1,
) -> tuple[DetectorReport, DetectorReport]:
    """
    Signature-based OOD detection for one model.

    Args:
        model: Trained transformer
        basis: Canonical basis from in-distribution prompts
        fit_prompts: Pool the per-trial fit sets are drawn from
        eval_prompts_id: Held-out in-distribution pool
        eval_prompts_ood: Shifted pool
        config: Sizes, trial count and confidence
        seed: Base seed for per-trial resampling

    Returns:
        (in-distribution report, OOD report)
    """
    fit_seeds = {p.seed for p in fit_prompts if p.seed is not None}
    eval_seeds = {p.seed for p in eval_prompts_id if p.seed is not None}
    if fit_seeds & eval_seeds:
        raise ValueError("Fit and held-out in-distribution prompts must be disjoint")

    def c2(prompts: Sequence[Prompt], source: SourceTag) -> np.ndarray:
        batch = collect(model, prompts, source)
        return head_coordinates(signatures(batch, basis))

    reports = detector_trials(
        c2(fit_prompts, SourceTag.TRAINING_SUBSPACE),
        {
            SourceTag.TRAINING_SUBSPACE: c2(eval_prompts_id, SourceTag.TRAINING_SUBSPACE),
            ood_source: c2(eval_prompts_ood, ood_source),
        },
        config,
        seed,
        model_id=model_id,
        workers=workers,
    )
    return reports[SourceTag.TRAINING_SUBSPACE], reports[ood_source]


def detector_table(reports: Sequence[tuple[DetectorReport, DetectorReport]]) -> pd.DataFrame:
    """One row per model with in-distribution and OOD inclusion rates."""
    rows = []
    for id_report, ood_report in reports:
        rows.append({
            "model_id": id_report.model_id,
            "id_mean": id_report.inclusion_pct_mean,
            "id_std": id_report.inclusion_pct_std,
            "ood_mean": ood_report.inclusion_pct_mean,
            "ood_std": ood_report.inclusion_pct_std,
            "trials": id_report.trials,
            "fit_size": id_report.fit_size,
            "eval_size": id_report.eval_size,
            "degenerate_fits": id_report.degenerate_fits,
        })
    return pd.DataFrame(rows)
