"""
Spectral signatures of residual-stream representations.

For each prompt the x-token representations form a (k+1) x m matrix Z_p.
In-distribution prompts share their top right singular directions with a
canonical basis built from a pooled batch, and their singular values
decay quickly after the second index. This module computes those spectra,
the per-prompt alignment with the canonical basis (the signature C_p), the
canonical-plane projection and readout-alignment tables, and the
correlation between signature strength and prediction error.

Sign convention: singular vectors are only defined up to sign, so a
prompt's v_{p,j} is flipped to agree with v*_j before comparing. The
reported alignment is therefore |<v*_j, v_{p,j}>|.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence
import logging

import numpy as np
import pandas as pd

from src.analysis.statistics import CorrelationResult, correlation, summarize
from src.config import SourceTag
from src.data_generation.prompts import Prompt
from src.data_generation.tokens import tokenize_arrays
from src.linalg import svd
from src.models.trace import PredictionTrace
from src.models.transformer import RegressionTransformer, forward_batch

logger = logging.getLogger(__name__)

DEFAULT_POOL_SIZE = 20
REPORT_RANK = 10
DEGENERACY_GAP = 1e-8
HEAD = 2


@dataclass
class RepresentationBatch:
    """
    Representation matrices Z_p for a batch of prompts.

    Attributes:
        matrices: (b, k+1, m) array, float64
        descriptors: Per-prompt metadata (seed, distribution name)
        source: Distribution the prompts came from
    """
    matrices: np.ndarray
    descriptors: list[dict] = field(default_factory=list)
    source: SourceTag = SourceTag.CUSTOM

    def __post_init__(self):
        if self.matrices.ndim != 3:
            raise ValueError(f"Representation batch must be (b, k+1, m), got {self.matrices.shape}")
        if not self.descriptors:
            self.descriptors = [{} for _ in range(len(self.matrices))]
        if len(self.descriptors) != len(self.matrices):
            raise ValueError("Need one descriptor per representation matrix")

    def __len__(self) -> int:
        return self.matrices.shape[0]

    @property
    def width(self) -> int:
        return self.matrices.shape[2]

    def subset(self, indices: Sequence[int]) -> "RepresentationBatch":
        indices = list(indices)
        return RepresentationBatch(
            matrices=self.matrices[indices],
            descriptors=[self.descriptors[i] for i in indices],
            source=self.source,
        )


def collect(
    model: RegressionTransformer,
    prompts: Sequence[Prompt],
    source: SourceTag,
    batch_size: int = 128,
) -> RepresentationBatch:
    """
    Run the model with capture on and stack each prompt's Z_p.

    Row i of Z_p is the post-final-norm vector at the position of x_i.
    """
    if not prompts:
        raise ValueError("Cannot collect representations for an empty batch")
    shapes = {(p.k, p.d) for p in prompts}
    if len(shapes) != 1:
        raise ValueError(f"Prompts must share k and d, got {sorted(shapes)}")

    chunks = []
    for start in range(0, len(prompts), batch_size):
        chunk = prompts[start: start + batch_size]
        tokens = tokenize_arrays(np.stack([p.xs for p in chunk]), np.stack([p.ys for p in chunk]))
        _, residuals = forward_batch(model, tokens, capture=True)
        chunks.append(residuals)

    descriptors = [{"seed": p.seed, "name": p.meta.get("name")} for p in prompts]
    return RepresentationBatch(matrices=np.concatenate(chunks), descriptors=descriptors, source=source)


# =============================================================================
# SPECTRA
# =============================================================================

@dataclass
class SpectrumStats:
    """Per-index mean and std of singular values across a batch."""
    mean: np.ndarray
    std: np.ndarray
    count: int
    source: SourceTag = SourceTag.CUSTOM

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "source": self.source.value,
            "index": np.arange(1, len(self.mean) + 1),
            "mean": self.mean,
            "std": self.std,
        })


def singular_values(batch: RepresentationBatch) -> np.ndarray:
    """(b, min(k+1, m)) singular values, one row per prompt."""
    return np.stack([svd(z).sigma for z in batch.matrices])


def spectrum_stats(batch: RepresentationBatch) -> SpectrumStats:
    """SVD every Z_p and average the spectra index-wise."""
    if len(batch) == 0:
        raise ValueError("Cannot compute spectra of an empty batch")
    sigmas = singular_values(batch)
    return SpectrumStats(
        mean=sigmas.mean(axis=0),
        std=sigmas.std(axis=0),
        count=len(batch),
        source=batch.source,
    )


# =============================================================================
# CANONICAL BASIS AND SIGNATURES
# =============================================================================

@dataclass
class CanonicalBasis:
    """
    Right singular vectors of the pooled matrix Z*.

    Attributes:
        v_star: m x r matrix with orthonormal columns
        sigma: Singular values of Z*
        pool_size: Number of prompts pooled
        source: Distribution of the pooled prompts
    """
    v_star: np.ndarray
    sigma: np.ndarray
    pool_size: int
    source: SourceTag = SourceTag.CUSTOM

    @property
    def rank(self) -> int:
        return self.v_star.shape[1]


def canonical_basis(batch: RepresentationBatch, pool_size: int = DEFAULT_POOL_SIZE) -> CanonicalBasis:
    """
    Stack the first ``pool_size`` Z_p vertically and take the right
    singular vectors of the result.
    """
    if pool_size < 1:
        raise ValueError(f"pool_size must be positive, got {pool_size}")
    if len(batch) < pool_size:
        raise ValueError(f"Batch of {len(batch)} prompts is smaller than pool_size={pool_size}")

    pooled = np.concatenate(batch.matrices[:pool_size], axis=0)
    result = svd(pooled)
    logger.debug("Canonical basis from %d x %d pooled matrix", *pooled.shape)
    return CanonicalBasis(v_star=result.v, sigma=result.sigma, pool_size=pool_size, source=batch.source)


@dataclass
class SignatureVector:
    """
    Index-wise alignment of one prompt's right singular vectors with the
    canonical basis.

    Attributes:
        c: Alignment per index, each in [0, 1]
        descriptor: Prompt metadata
        degenerate_indices: Indices whose singular value is within 1e-8 of
            a neighbour, where the index-wise pairing is ill-defined
    """
    c: np.ndarray
    descriptor: dict = field(default_factory=dict)
    degenerate_indices: tuple[int, ...] = ()

    @property
    def head_norm(self) -> float:
        """Squared norm of the first two alignments, in [0, 2]."""
        return float(np.sum(self.c[:HEAD] ** 2))


def _degenerate(sigma: np.ndarray, r: int) -> set[int]:
    gaps = np.abs(np.diff(sigma))
    flagged = set()
    for j in range(r):
        left = j > 0 and gaps[j - 1] < DEGENERACY_GAP
        right = j < len(gaps) and gaps[j] < DEGENERACY_GAP
        if left or right:
            flagged.add(j)
    return flagged


def signature(z_p: np.ndarray, basis: CanonicalBasis, descriptor: Optional[dict] = None) -> SignatureVector:
    """
    Signature C_p of one representation matrix.

    c_j = <v*_j, v_{p,j}> after flipping v_{p,j} to have a non-negative
    dot with v*_j.
    """
    if z_p.ndim != 2 or z_p.shape[1] != basis.v_star.shape[0]:
        raise ValueError(
            f"Representation of shape {z_p.shape} is incompatible with a basis in R^{basis.v_star.shape[0]}"
        )
    result = svd(z_p)
    r = min(result.v.shape[1], basis.rank)
    dots = np.sum(basis.v_star[:, :r] * result.v[:, :r], axis=0)
    c = np.minimum(np.abs(dots), 1.0)

    flagged = _degenerate(result.sigma, r) | _degenerate(basis.sigma, r)
    return SignatureVector(c=c, descriptor=dict(descriptor or {}), degenerate_indices=tuple(sorted(flagged)))


def signatures(batch: RepresentationBatch, basis: CanonicalBasis, workers: int = 1) -> list[SignatureVector]:
    """Signatures for every prompt in ``batch``, in batch order."""
    pairs = list(zip(batch.matrices, batch.descriptors))
    if workers <= 1:
        return [signature(z, basis, desc) for z, desc in pairs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda pair: signature(pair[0], basis, pair[1]), pairs))


def signature_frame(sigs: Sequence[SignatureVector], source: SourceTag, count: int = REPORT_RANK) -> pd.DataFrame:
    """One row per prompt with c_1..c_count, the head norm and degeneracy flags."""
    rows = []
    for sig in sigs:
        row = {"source": source.value, "prompt_seed": sig.descriptor.get("seed")}
        row.update({f"c_{j + 1}": float(sig.c[j]) for j in range(min(count, len(sig.c)))})
        row["head_norm"] = sig.head_norm
        row["degenerate"] = ";".join(str(j + 1) for j in sig.degenerate_indices if j < count)
        rows.append(row)
    return pd.DataFrame(rows)


def signature_means(sigs: Sequence[SignatureVector], count: int = REPORT_RANK) -> tuple[np.ndarray, np.ndarray]:
    """Per-index mean and std of the first ``count`` alignments."""
    if not sigs:
        raise ValueError("Cannot average an empty set of signatures")
    width = min(count, min(len(s.c) for s in sigs))
    stacked = np.stack([s.c[:width] for s in sigs])
    return stacked.mean(axis=0), stacked.std(axis=0)


# =============================================================================
# PROJECTION AND READOUT REPORTS
# =============================================================================

@dataclass
class ProjectionReport:
    """
    How much of each Z_p lives in the top-2 canonical plane, and how much
    the readout changes when Z_p is replaced by its projection.
    """
    norm_ratio_mean: float
    prediction_mse: float
    rows: pd.DataFrame
    source: SourceTag = SourceTag.CUSTOM

    def to_dict(self) -> dict:
        return {
            "source": self.source.value,
            "norm_ratio_mean": self.norm_ratio_mean,
            "prediction_mse": self.prediction_mse,
            "norm_ratio": summarize(self.rows["norm_ratio"]).to_dict(),
            "count": len(self.rows),
        }


def canonical_projection_report(
    batch: RepresentationBatch,
    basis: CanonicalBasis,
    readout: np.ndarray,
) -> ProjectionReport:
    """
    Norm ratio ||P Z|| / ||Z|| and mean squared difference between Z f and
    P Z f, with P the projection onto the first two canonical vectors.

    The readout bias cancels in the difference and is not needed.
    """
    if basis.rank < HEAD:
        raise ValueError(f"Canonical basis needs at least {HEAD} vectors, has {basis.rank}")
    plane = basis.v_star[:, :HEAD]
    projector = plane @ plane.T

    rows = []
    for z, desc in zip(batch.matrices, batch.descriptors):
        projected = z @ projector
        norm = np.linalg.norm(z)
        ratio = float(np.linalg.norm(projected) / norm) if norm > 0 else 0.0
        mse = float(np.mean((z @ readout - projected @ readout) ** 2))
        rows.append({"prompt_seed": desc.get("seed"), "norm_ratio": min(ratio, 1.0), "prediction_mse": mse})

    frame = pd.DataFrame(rows)
    return ProjectionReport(
        norm_ratio_mean=float(frame["norm_ratio"].mean()),
        prediction_mse=float(frame["prediction_mse"].mean()),
        rows=frame,
        source=batch.source,
    )


@dataclass
class AlignmentReport:
    """Share of the readout direction on singular coordinates 1-2 and 3-10."""
    head_mean: float
    head_std: float
    tail_mean: float
    tail_std: float
    rows: pd.DataFrame
    source: SourceTag = SourceTag.CUSTOM

    def to_dict(self) -> dict:
        return {
            "source": self.source.value,
            "head_mean": self.head_mean,
            "head_std": self.head_std,
            "tail_mean": self.tail_mean,
            "tail_std": self.tail_std,
            "count": len(self.rows),
        }


def readout_alignment(batch: RepresentationBatch, readout: np.ndarray) -> AlignmentReport:
    """
    For each prompt, ||(V_p^T f)_{1:2}||^2 / ||f||^2 and
    ||(V_p^T f)_{3:10}||^2 / ||f||^2, summarized as mean and std.
    """
    if batch.width < REPORT_RANK:
        raise ValueError(f"Readout alignment needs width m >= {REPORT_RANK}, got {batch.width}")
    f_norm = float(readout @ readout)
    if f_norm == 0:
        raise ValueError("Readout direction is zero")

    rows = []
    for z, desc in zip(batch.matrices, batch.descriptors):
        coords = svd(z).v.T @ readout
        rows.append({
            "prompt_seed": desc.get("seed"),
            "head": float(np.sum(coords[:HEAD] ** 2) / f_norm),
            "tail": float(np.sum(coords[HEAD:REPORT_RANK] ** 2) / f_norm),
        })

    frame = pd.DataFrame(rows)
    head, tail = summarize(frame["head"]), summarize(frame["tail"])
    return AlignmentReport(
        head_mean=head.mean,
        head_std=head.std,
        tail_mean=tail.mean,
        tail_std=tail.std,
        rows=frame,
        source=batch.source,
    )


# =============================================================================
# SIGNATURE vs LOSS
# =============================================================================

@dataclass
class LossSignatureCorrelation:
    """Pearson correlation of ||C_{p,:2}||^2 against per-prompt mean MSE."""
    result: CorrelationResult
    pairs: pd.DataFrame

    def to_dict(self) -> dict:
        return self.result.to_dict()


def loss_signature_correlation(
    groups: Sequence[tuple[Sequence[SignatureVector], Sequence[PredictionTrace], SourceTag]],
) -> LossSignatureCorrelation:
    """
    Pool (signature, trace) pairs from several batches and correlate
    signature strength with the trace's mean squared error over positions.

    Args:
        groups: (signatures, traces, source) per batch, aligned prompt by
            prompt

    Raises:
        UndefinedCorrelationError: Fewer than 3 pairs or a constant side
    """
    rows = []
    for sigs, traces, source in groups:
        if len(sigs) != len(traces):
            raise ValueError(f"Got {len(sigs)} signatures but {len(traces)} traces for {source.value}")
        for sig, trace in zip(sigs, traces):
            rows.append({
                "source": source.value,
                "prompt_seed": trace.prompt_seed,
                "head_norm": sig.head_norm,
                "mean_mse": trace.mean_error,
            })
    pairs = pd.DataFrame(rows, columns=["source", "prompt_seed", "head_norm", "mean_mse"])
    result = correlation(pairs["head_norm"].to_numpy(), pairs["mean_mse"].to_numpy())
    logger.info("Signature/MSE correlation: %s", result.interpretation)
    return LossSignatureCorrelation(result=result, pairs=pairs)
