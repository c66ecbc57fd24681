"""Tests for representation spectra, canonical bases and signatures."""

import numpy as np
import pytest

from src.analysis.spectra import (
    RepresentationBatch,
    canonical_basis,
    canonical_projection_report,
    collect,
    loss_signature_correlation,
    readout_alignment,
    signature,
    signature_frame,
    signature_means,
    signatures,
    spectrum_stats,
)
from src.config import ModelConfig, SourceTag
from src.data_generation import PromptDistribution, sample_prompt, sample_prompts
from src.errors import UndefinedCorrelationError
from src.linalg import gaussian_matrix, make_generator
from src.models.baselines import ols_trace
from src.models.transformer import build_model


def rank_two_batch(b=20, rows=9, m=16, noise=1e-6, seed=0):
    """Z_p built from two fixed directions with prompt-specific weights plus tiny noise."""
    rng = make_generator(seed)
    plane = np.linalg.qr(rng.standard_normal((m, 2)))[0]
    mats = []
    for _ in range(b):
        coeffs = rng.standard_normal((rows, 2)) * np.array([10.0, 1.0])
        mats.append(coeffs @ plane.T + noise * rng.standard_normal((rows, m)))
    return RepresentationBatch(matrices=np.stack(mats), source=SourceTag.TRAINING_SUBSPACE), plane


class TestCollect:
    def test_shapes_and_determinism(self):
        model = build_model(ModelConfig(layers=1, heads=2, hidden=12, token_dim=3, max_positions=11))
        prompt = sample_prompt(PromptDistribution.full(3, 5), seed=0)
        batch = collect(model, [prompt, prompt], SourceTag.FULL)
        assert batch.matrices.shape == (2, 6, 12)
        np.testing.assert_array_equal(batch.matrices[0], batch.matrices[1])
        assert batch.descriptors[0]["seed"] == 0
        assert np.all(np.isfinite(batch.matrices))

    def test_mixed_shapes_rejected(self):
        model = build_model(ModelConfig(layers=1, heads=2, hidden=12, token_dim=3, max_positions=11))
        prompts = [sample_prompt(PromptDistribution.full(3, 5), 0), sample_prompt(PromptDistribution.full(3, 4), 0)]
        with pytest.raises(ValueError):
            collect(model, prompts, SourceTag.FULL)

    def test_empty_rejected(self):
        model = build_model(ModelConfig(layers=1, heads=2, hidden=12, token_dim=3, max_positions=11))
        with pytest.raises(ValueError):
            collect(model, [], SourceTag.FULL)


class TestSpectrum:
    def test_identical_matrices_have_zero_spread(self):
        z = gaussian_matrix(6, 10, seed=0)
        stats = spectrum_stats(RepresentationBatch(matrices=np.stack([z, z, z])))
        np.testing.assert_allclose(stats.std, 0.0, atol=1e-12)
        assert np.all(np.diff(stats.mean) <= 0)

    def test_rank_two_drop(self):
        batch, _ = rank_two_batch()
        stats = spectrum_stats(batch)
        assert stats.mean[2] < 1e-3 * stats.mean[1]

    def test_frame(self):
        batch, _ = rank_two_batch(b=3)
        frame = spectrum_stats(batch).to_frame()
        assert list(frame.columns) == ["source", "index", "mean", "std"]
        assert frame["source"].iloc[0] == "training_subspace"


class TestCanonicalBasis:
    def test_orthonormal_columns(self):
        batch, _ = rank_two_batch()
        basis = canonical_basis(batch, pool_size=20)
        np.testing.assert_allclose(basis.v_star.T @ basis.v_star, np.eye(basis.rank), atol=1e-8)

    def test_spans_shared_plane(self):
        batch, plane = rank_two_batch()
        top = canonical_basis(batch).v_star[:, :2]
        np.testing.assert_allclose(top @ top.T, plane @ plane.T, atol=1e-5)

    def test_pool_order_invariant_spectrum(self):
        batch, _ = rank_two_batch()
        forward = canonical_basis(batch)
        reverse = canonical_basis(batch.subset(range(len(batch) - 1, -1, -1)))
        np.testing.assert_allclose(forward.sigma, reverse.sigma, atol=1e-8)

    def test_pool_too_small(self):
        batch, _ = rank_two_batch(b=5)
        with pytest.raises(ValueError):
            canonical_basis(batch, pool_size=20)


class TestSignature:
    def test_pooled_prompt_self_alignment(self):
        batch, _ = rank_two_batch()
        basis = canonical_basis(batch)
        sig = signature(batch.matrices[0], basis)
        assert sig.c[0] > 0.98 and sig.c[1] > 0.98
        assert 0.0 <= sig.head_norm <= 2.0

    def test_entries_in_unit_interval(self):
        batch, _ = rank_two_batch()
        for sig in signatures(batch, canonical_basis(batch)):
            assert np.all((sig.c >= 0) & (sig.c <= 1))

    def test_random_directions_weakly_aligned(self):
        m = 64
        z_pool = RepresentationBatch(matrices=gaussian_matrix(20 * 30, m, seed=1).reshape(20, 30, m))
        basis = canonical_basis(z_pool)
        sigs = [signature(gaussian_matrix(30, m, seed=100 + i), basis) for i in range(20)]
        assert np.mean([s.c[:5] for s in sigs]) < 4.0 / np.sqrt(m)

    def test_degenerate_singular_values_flagged(self):
        batch, _ = rank_two_batch()
        basis = canonical_basis(batch)
        z = np.zeros((9, 16))
        z[:2, :2] = np.eye(2)
        assert 0 in signature(z, basis).degenerate_indices

    def test_width_mismatch(self):
        batch, _ = rank_two_batch()
        with pytest.raises(ValueError):
            signature(np.ones((9, 5)), canonical_basis(batch))

    def test_parallel_matches_serial(self):
        batch, _ = rank_two_batch()
        basis = canonical_basis(batch)
        serial = signatures(batch, basis)
        threaded = signatures(batch, basis, workers=4)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a.c, b.c)

    def test_frame_and_means(self):
        batch, _ = rank_two_batch(b=20)
        sigs = signatures(batch, canonical_basis(batch))
        frame = signature_frame(sigs, SourceTag.TRAINING_SUBSPACE)
        assert len(frame) == 20
        assert {"c_1", "c_2", "head_norm", "degenerate"} <= set(frame.columns)
        means, stds = signature_means(sigs)
        assert means.shape == stds.shape
        assert means[0] > 0.98
        with pytest.raises(ValueError):
            signature_means([])


class TestProjectionReport:
    def test_inside_plane(self):
        batch, _ = rank_two_batch(noise=0.0)
        basis = canonical_basis(batch)
        readout = make_generator(3).standard_normal(16)
        report = canonical_projection_report(batch, basis, readout)
        assert report.norm_ratio_mean == pytest.approx(1.0, abs=1e-8)
        assert report.prediction_mse == pytest.approx(0.0, abs=1e-16)

    def test_orthogonal_to_plane(self):
        batch, plane = rank_two_batch(noise=0.0)
        basis = canonical_basis(batch)
        complement = np.eye(16) - plane @ plane.T
        other = RepresentationBatch(matrices=gaussian_matrix(27, 16, seed=4).reshape(3, 9, 16) @ complement)
        readout = make_generator(3).standard_normal(16)
        report = canonical_projection_report(other, basis, readout)
        assert report.norm_ratio_mean == pytest.approx(0.0, abs=1e-5)
        expected = np.mean([np.mean((z @ readout) ** 2) for z in other.matrices])
        assert report.prediction_mse == pytest.approx(expected, rel=1e-4)
        assert report.to_dict()["count"] == 3


class TestReadoutAlignment:
    def test_readout_in_top_plane(self):
        batch, plane = rank_two_batch(noise=0.0)
        report = readout_alignment(batch, plane @ np.array([0.6, -0.8]))
        assert report.head_mean == pytest.approx(1.0, abs=1e-8)
        assert report.tail_mean == pytest.approx(0.0, abs=1e-8)

    def test_partial_parseval(self):
        batch = RepresentationBatch(matrices=gaussian_matrix(5 * 12, 16, seed=2).reshape(5, 12, 16))
        report = readout_alignment(batch, make_generator(1).standard_normal(16))
        assert np.all(report.rows["head"] + report.rows["tail"] <= 1.0 + 1e-12)

    def test_needs_width_ten(self):
        batch = RepresentationBatch(matrices=np.ones((2, 4, 8)))
        with pytest.raises(ValueError):
            readout_alignment(batch, np.ones(8))


class TestLossCorrelation:
    def test_pairs_and_result(self):
        batch, _ = rank_two_batch(b=20)
        basis = canonical_basis(batch)
        prompts = sample_prompts(PromptDistribution.full(4, 8), 20, base_seed=0)
        traces = [ols_trace(p) for p in prompts]
        sigs = signatures(batch, basis)
        corr = loss_signature_correlation([(sigs, traces, SourceTag.TRAINING_SUBSPACE)])
        assert len(corr.pairs) == 20
        assert -1.0 <= corr.result.r <= 1.0
        assert corr.result.n == 20

    def test_too_few_pairs(self):
        batch, _ = rank_two_batch(b=20)
        sigs = signatures(batch.subset([0, 1]), canonical_basis(batch))
        traces = [ols_trace(p) for p in sample_prompts(PromptDistribution.full(4, 8), 2, 0)]
        with pytest.raises(UndefinedCorrelationError):
            loss_signature_correlation([(sigs, traces, SourceTag.FULL)])

    def test_misaligned_groups(self):
        batch, _ = rank_two_batch(b=20)
        sigs = signatures(batch.subset([0, 1, 2]), canonical_basis(batch))
        traces = [ols_trace(p) for p in sample_prompts(PromptDistribution.full(4, 8), 2, 0)]
        with pytest.raises(ValueError):
            loss_signature_correlation([(sigs, traces, SourceTag.FULL)])
