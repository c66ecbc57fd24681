"""
Per-position predictions and the shared evaluation protocol.

Every predictor, classical or transformer, is scored the same way: the
squared error at position i is (prediction_i - w^T x_i)^2 against the
noiseless target, and a batch is summarized by the per-position mean.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.data_generation.prompts import Prompt


@dataclass
class PredictionTrace:
    """
    Predictions of one model on one prompt.

    Attributes:
        predictions: k+1 predictions; entry i uses only the first i pairs
        squared_errors: (prediction_i - w^T x_i)^2 per position
        model_id: Name of the predictor
        prompt_seed: Seed of the evaluated prompt
        diverged: Set when an iterative solver blew up on this prompt
    """
    predictions: np.ndarray
    squared_errors: np.ndarray
    model_id: str
    prompt_seed: Optional[int] = None
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.predictions)

    @property
    def final_error(self) -> float:
        """Squared error at the query position."""
        return float(self.squared_errors[-1])

    @property
    def mean_error(self) -> float:
        """Squared error averaged over all positions."""
        return float(np.mean(self.squared_errors))


def make_trace(prompt: Prompt, predictions: np.ndarray, model_id: str, diverged: bool = False) -> PredictionTrace:
    """Score predictions against the prompt's noiseless targets."""
    predictions = np.asarray(predictions, dtype=np.float64)
    if predictions.shape != (prompt.k + 1,):
        raise ValueError(f"Expected {prompt.k + 1} predictions, got shape {predictions.shape}")
    errors = (predictions - prompt.targets) ** 2
    return PredictionTrace(
        predictions=predictions,
        squared_errors=errors,
        model_id=model_id,
        prompt_seed=prompt.seed,
        diverged=diverged,
    )


def mean_squared_error(traces: Sequence[PredictionTrace]) -> np.ndarray:
    """Per-position mean of squared errors across a batch of traces."""
    if not traces:
        raise ValueError("Cannot average an empty batch of traces")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"Traces must have equal lengths, got {sorted(lengths)}")
    return np.mean(np.stack([t.squared_errors for t in traces]), axis=0)


def traces_to_frame(traces: Sequence[PredictionTrace]) -> pd.DataFrame:
    """Long-format export: model_id, prompt_seed, position, prediction, squared_error."""
    rows = []
    for trace in traces:
        for position, (pred, err) in enumerate(zip(trace.predictions, trace.squared_errors), start=1):
            rows.append({
                "model_id": trace.model_id,
                "prompt_seed": trace.prompt_seed,
                "position": position,
                "prediction": pred,
                "squared_error": err,
            })
    return pd.DataFrame(rows, columns=["model_id", "prompt_seed", "position", "prediction", "squared_error"])


def label_power(prompts: Sequence[Prompt]) -> float:
    """Batch mean of squared noiseless targets, used to normalize MSE."""
    return float(np.mean(np.concatenate([p.targets ** 2 for p in prompts])))
