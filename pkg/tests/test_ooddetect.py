"""Tests for the Gaussian confidence-region OOD detector."""

import numpy as np
import pytest

from src.analysis.ooddetect import (
    GaussianRegion,
    contains,
    detector_table,
    detector_trial,
    detector_trials,
    fit_region,
    head_coordinates,
)
from src.analysis.spectra import SignatureVector, canonical_basis, collect
from src.config import DetectorConfig, ModelConfig, SourceTag
from src.data_generation import PromptDistribution, sample_prompts
from src.errors import DegenerateFitError
from src.linalg import make_generator
from src.models.transformer import build_model

MU0 = np.array([0.8, 0.6])
SIGMA0 = np.array([[0.02, 0.005], [0.005, 0.01]])


def gaussian_samples(n, seed=0, mu=MU0, sigma=SIGMA0):
    return make_generator(seed).multivariate_normal(mu, sigma, size=n)


class TestFitRegion:
    def test_recovers_mean(self):
        region = fit_region(gaussian_samples(10_000))
        np.testing.assert_allclose(region.mu, MU0, atol=0.05)

    def test_population_covariance(self):
        samples = gaussian_samples(50, seed=1)
        region = fit_region(samples)
        centered = samples - samples.mean(axis=0)
        np.testing.assert_allclose(region.sigma, centered.T @ centered / 50, atol=1e-14)

    def test_threshold(self):
        assert fit_region(gaussian_samples(20)).threshold == pytest.approx(5.99146, abs=1e-5)

    def test_equal_samples_are_degenerate(self):
        with pytest.raises(DegenerateFitError):
            fit_region(np.tile([0.5, 0.5], (10, 1)))

    def test_collinear_samples_are_degenerate(self):
        t = np.linspace(0, 1, 10)
        with pytest.raises(DegenerateFitError):
            fit_region(np.column_stack([t, 2 * t]))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_region(gaussian_samples(2))

    def test_wrong_width(self):
        with pytest.raises(ValueError):
            fit_region(np.ones((5, 3)))


class TestContains:
    def test_center_is_inside(self):
        region = fit_region(gaussian_samples(100))
        assert contains(region, region.mu)

    def test_identity_covariance_distance(self):
        region = GaussianRegion(mu=np.zeros(2), sigma=np.eye(2), confidence=0.95, threshold=5.99146)
        assert not contains(region, np.array([3.0, 0.0]))
        assert contains(region, np.array([2.0, 0.0]))
        assert region.distance2(np.array([[3.0, 0.0]]))[0] == pytest.approx(9.0)

    def test_self_consistency(self):
        region = fit_region(gaussian_samples(5_000, seed=2))
        draws = make_generator(3).multivariate_normal(region.mu, region.sigma, size=100_000)
        assert region.inclusion_pct(draws) == pytest.approx(95.0, abs=0.5)

    def test_affine_invariance(self):
        samples = gaussian_samples(200, seed=4)
        queries = gaussian_samples(50, seed=5, mu=MU0 + 0.1)
        A, b = np.array([[2.0, 1.0], [-0.5, 3.0]]), np.array([1.0, -2.0])
        region = fit_region(samples)
        moved = fit_region(samples @ A.T + b)
        for q in queries:
            assert contains(region, q) == contains(moved, A @ q + b)

    def test_monotone_in_confidence(self):
        samples = gaussian_samples(200, seed=6)
        queries = gaussian_samples(500, seed=7, sigma=4 * SIGMA0)
        rates = [fit_region(samples, c).inclusion_pct(queries) for c in (0.5, 0.8, 0.9, 0.95, 0.99)]
        assert rates == sorted(rates)

    def test_inclusion_on_empty(self):
        with pytest.raises(ValueError):
            fit_region(gaussian_samples(20)).inclusion_pct(np.zeros((0, 2)))


class TestDetectorTrials:
    def test_oracle_inclusion_near_nominal(self):
        fit_pool = gaussian_samples(2_000, seed=8)
        eval_pool = gaussian_samples(2_000, seed=9)
        config = DetectorConfig(fit_size=500, eval_size=500, trials=10)
        reports = detector_trials(fit_pool, {SourceTag.TRAINING_SUBSPACE: eval_pool}, config, seed=0)
        report = reports[SourceTag.TRAINING_SUBSPACE]
        assert report.inclusion_pct_mean == pytest.approx(95.0, abs=2.0)
        assert 0 <= report.inclusion_pct_std <= 100
        assert report.trials == 10

    def test_shifted_pool_is_rejected(self):
        fit_pool = gaussian_samples(200, seed=10)
        shifted = gaussian_samples(200, seed=11, mu=MU0 - 1.0)
        config = DetectorConfig(fit_size=64, eval_size=64, trials=5)
        reports = detector_trials(
            fit_pool,
            {SourceTag.TRAINING_SUBSPACE: gaussian_samples(200, seed=12), SourceTag.ORTHOGONAL: shifted},
            config,
            seed=1,
        )
        assert reports[SourceTag.ORTHOGONAL].inclusion_pct_mean < 5.0
        assert reports[SourceTag.TRAINING_SUBSPACE].inclusion_pct_mean > 80.0

    def test_single_trial_has_zero_std(self):
        config = DetectorConfig(fit_size=20, eval_size=20, trials=1)
        reports = detector_trials(gaussian_samples(40), {SourceTag.FULL: gaussian_samples(40, seed=1)}, config, seed=0)
        assert reports[SourceTag.FULL].inclusion_pct_std == 0.0

    def test_seeded(self):
        config = DetectorConfig(fit_size=20, eval_size=20, trials=4)
        pools = {SourceTag.FULL: gaussian_samples(60, seed=1)}
        a = detector_trials(gaussian_samples(60), pools, config, seed=3)
        b = detector_trials(gaussian_samples(60), pools, config, seed=3, workers=4)
        assert a[SourceTag.FULL].to_dict() == b[SourceTag.FULL].to_dict()

    def test_degenerate_fits_resampled(self):
        # a quarter of the pool is one repeated point, so some subsets are singular
        pool = np.vstack([np.tile([0.5, 0.5], (10, 1)), gaussian_samples(30, seed=2)])
        config = DetectorConfig(fit_size=3, eval_size=3, trials=60)
        reports = detector_trials(pool, {SourceTag.FULL: gaussian_samples(10)}, config, seed=0)
        assert reports[SourceTag.FULL].degenerate_fits > 0

    def test_always_degenerate(self):
        pool = np.tile([0.5, 0.5], (10, 1))
        config = DetectorConfig(fit_size=5, eval_size=5, trials=1)
        with pytest.raises(DegenerateFitError):
            detector_trials(pool, {SourceTag.FULL: pool}, config, seed=0)

    def test_eval_larger_than_pool(self):
        config = DetectorConfig(fit_size=10, eval_size=50, trials=1)
        with pytest.raises(ValueError):
            detector_trials(gaussian_samples(20), {SourceTag.FULL: gaussian_samples(20)}, config, seed=0)


class TestDetectorTrial:
    def test_model_end_to_end(self):
        config = ModelConfig(layers=1, heads=2, hidden=16, token_dim=4, max_positions=17, seed=0)
        model = build_model(config)
        dist = PromptDistribution.full(4, 8)
        basis = canonical_basis(collect(model, sample_prompts(dist, 4, 1000), SourceTag.FULL), pool_size=4)
        det = DetectorConfig(fit_size=8, eval_size=8, trials=3)
        id_report, ood_report = detector_trial(
            model, basis,
            sample_prompts(dist, 16, 0),
            sample_prompts(dist, 16, 100),
            sample_prompts(dist.with_scale(3.0), 16, 200),
            det, seed=0, model_id="t_tiny",
        )
        assert id_report.model_id == "t_tiny"
        assert ood_report.source == SourceTag.ORTHOGONAL
        table = detector_table([(id_report, ood_report)])
        assert list(table["model_id"]) == ["t_tiny"]
        assert 0 <= table["id_mean"].iloc[0] <= 100

    def test_overlapping_fit_and_eval_rejected(self):
        config = ModelConfig(layers=1, heads=2, hidden=16, token_dim=4, max_positions=17, seed=0)
        model = build_model(config)
        dist = PromptDistribution.full(4, 8)
        basis = canonical_basis(collect(model, sample_prompts(dist, 4, 1000), SourceTag.FULL), pool_size=4)
        shared = sample_prompts(dist, 16, 0)
        with pytest.raises(ValueError, match="disjoint"):
            detector_trial(model, basis, shared, shared, shared, DetectorConfig(fit_size=8, eval_size=8, trials=1), seed=0)


def test_head_coordinates():
    sigs = [SignatureVector(c=np.array([0.9, 0.8, 0.1])), SignatureVector(c=np.array([0.7, 0.6, 0.2]))]
    np.testing.assert_array_equal(head_coordinates(sigs), [[0.9, 0.8], [0.7, 0.6]])
