"""In-context regressors: classical baselines and the transformer."""

from .trace import PredictionTrace, make_trace, mean_squared_error, traces_to_frame, label_power
from .baselines import (
    BASELINE_NAMES,
    bayes_trace,
    evaluate_baseline,
    gd_trace,
    kernel_ridge_trace,
    ols_projected_inputs_trace,
    ols_trace,
    ridge_trace,
    run_baseline,
)
from .transformer import (
    ForwardOutput,
    QueryPredictor,
    RegressionTransformer,
    build_model,
    forward,
    forward_batch,
    loss,
    transformer_traces,
)
from .training import TrainingRun, curriculum_state, train
from .checkpoint import CheckpointState, checkpoint_exists, load_checkpoint, save_checkpoint
from .probes import ImplicitWeight, implicit_weight

__all__ = [
    "PredictionTrace",
    "make_trace",
    "mean_squared_error",
    "traces_to_frame",
    "label_power",
    "BASELINE_NAMES",
    "bayes_trace",
    "evaluate_baseline",
    "gd_trace",
    "kernel_ridge_trace",
    "ols_projected_inputs_trace",
    "ols_trace",
    "ridge_trace",
    "run_baseline",
    "ForwardOutput",
    "QueryPredictor",
    "RegressionTransformer",
    "build_model",
    "forward",
    "forward_batch",
    "loss",
    "transformer_traces",
    "TrainingRun",
    "curriculum_state",
    "train",
    "CheckpointState",
    "checkpoint_exists",
    "load_checkpoint",
    "save_checkpoint",
    "ImplicitWeight",
    "implicit_weight",
]
