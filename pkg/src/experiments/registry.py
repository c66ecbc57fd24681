"""
Registered experiments and the runner that wraps them with a manifest.
"""

from dataclasses import dataclass
from typing import Callable
import logging
import time

from src.config import ExperimentConfig
from src.errors import ConfigError
from src.experiments import experiments as exp
from src.experiments.context import ExperimentContext
from src.experiments.experiments import ExperimentResult
from src.experiments.manifest import RunManifest, clear_manifest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentSpec:
    """
    A runnable experiment.

    Attributes:
        experiment_id: Name used on the command line
        run: Function producing the artifacts
        artifact: The one figure or table the experiment reproduces,
            prefixed with "Figure:" or "Table:"
        description: What the run computes
    """
    experiment_id: str
    run: Callable[[ExperimentContext], ExperimentResult]
    artifact: str
    description: str


EXPERIMENTS: dict[str, ExperimentSpec] = {
    entry.experiment_id: entry
    for entry in (
        ExperimentSpec(
            "input_restriction", exp.exp_input_restriction,
            "Figure: error versus context length for input-restricted training",
            "MSE curves of T_parallel, T_full, OLS and ridge on D_parallel, D_perp and D_full",
        ),
        ExperimentSpec(
            "blend", exp.exp_blend,
            "Figure: final-position error versus blend weight between in-distribution and orthogonal inputs",
            "Sweeps the blend weight for inputs (with the task-blend companion curve)",
        ),
        ExperimentSpec(
            "spectra", exp.exp_spectra,
            "Figure: singular-value spectra of residual-stream embeddings",
            "Spectra and canonical alignment of T_parallel representations",
        ),
        ExperimentSpec(
            "ood_detector", exp.exp_ood_detector,
            "Table: detector inclusion percentages (mean and std over trials)",
            "Inclusion rates of the Gaussian signature detector for T_parallel and T_full",
        ),
        ExperimentSpec(
            "projection_tables", exp.exp_projection_tables,
            "Table: canonical-plane projection magnitudes with readout-head alignment",
            "Canonical-plane projection of representations and readout-head alignment",
        ),
        ExperimentSpec(
            "correlation", exp.exp_correlation,
            "Figure: signature strength against per-prompt error with line of best fit",
            "Pearson correlation between signature strength and per-prompt MSE",
        ),
        ExperimentSpec(
            "noise", exp.exp_noise,
            "Figure: error curves of models trained with noisy labels, tested without label noise",
            "Models trained with noisy labels, evaluated on noiseless prompts (needs noise_sigma)",
        ),
        ExperimentSpec(
            "scaling", exp.exp_scaling,
            "Figure: last-token error versus input scale",
            "Final-position MSE versus input scale, including the multi-scale model",
        ),
        ExperimentSpec(
            "implicit_weights", exp.exp_implicit_weights,
            "Table: average norm and variance of the projected implicit weight",
            "Norms of the implicit weight of the weight-restricted model inside A and B",
        ),
        ExperimentSpec(
            "vary_dim", exp.exp_vary_dim,
            "Figure: error curves for weight subspaces of several dimensions",
            "Weight-restricted models at several q with the plateau-at-q check",
        ),
        ExperimentSpec(
            "weight_restriction", exp.exp_weight_restriction,
            "Figure: error curves and spectra for weight-restricted training",
            "MSE curves and spectral signatures of the weight-restricted model",
        ),
    )
}


def get_experiment(experiment_id: str) -> ExperimentSpec:
    """Get an experiment by id."""
    if experiment_id not in EXPERIMENTS:
        raise ConfigError(
            f"Unknown experiment: {experiment_id}. Valid experiments: {list(EXPERIMENTS)}"
        )
    return EXPERIMENTS[experiment_id]


def run_experiment(config: ExperimentConfig) -> tuple[ExperimentResult, RunManifest]:
    """
    Run one experiment end to end and write its manifest.

    Returns:
        (result, manifest)
    """
    entry = get_experiment(config.experiment_id)
    ctx = ExperimentContext(config)
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    clear_manifest(ctx.out_dir)

    logger.info("Running %s (%s) into %s", entry.experiment_id, entry.artifact, ctx.out_dir)
    start = time.perf_counter()
    result = entry.run(ctx)
    elapsed = time.perf_counter() - start

    manifest = RunManifest.build(
        entry.experiment_id,
        config.to_dict(),
        ctx.out_dir,
        result.outputs,
        elapsed,
    )
    manifest.write(ctx.out_dir)
    return result, manifest
