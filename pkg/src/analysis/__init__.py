"""Analysis of trained models: spectral signatures, OOD detection and statistics."""

from .statistics import CorrelationResult, StatisticalSummary, correlation, summarize
from .spectra import (
    AlignmentReport,
    CanonicalBasis,
    LossSignatureCorrelation,
    ProjectionReport,
    RepresentationBatch,
    SignatureVector,
    SpectrumStats,
    canonical_basis,
    canonical_projection_report,
    collect,
    loss_signature_correlation,
    readout_alignment,
    signature,
    signatures,
    spectrum_stats,
)
from .ooddetect import DetectorReport, GaussianRegion, contains, detector_trial, detector_trials, fit_region

__all__ = [
    "CorrelationResult",
    "StatisticalSummary",
    "correlation",
    "summarize",
    "AlignmentReport",
    "CanonicalBasis",
    "LossSignatureCorrelation",
    "ProjectionReport",
    "RepresentationBatch",
    "SignatureVector",
    "SpectrumStats",
    "canonical_basis",
    "canonical_projection_report",
    "collect",
    "loss_signature_correlation",
    "readout_alignment",
    "signature",
    "signatures",
    "spectrum_stats",
    "DetectorReport",
    "GaussianRegion",
    "contains",
    "detector_trial",
    "detector_trials",
    "fit_region",
]
