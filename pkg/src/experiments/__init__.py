"""Experiment harness: context, registered experiments, manifests and CLI."""

from .context import ExperimentContext
from .experiments import ExperimentResult
from .manifest import RunManifest, verify_run
from .registry import EXPERIMENTS, ExperimentSpec, get_experiment, run_experiment

__all__ = [
    "ExperimentContext",
    "ExperimentResult",
    "RunManifest",
    "verify_run",
    "EXPERIMENTS",
    "ExperimentSpec",
    "get_experiment",
    "run_experiment",
]
