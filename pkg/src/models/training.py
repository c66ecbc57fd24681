"""
Training loop for the regression transformer.

Each step draws a fresh batch from the prompt distribution with its own
seed, applies the curriculum mask for that step, and takes one AdamW step
on the mean squared error at the x-token positions. The next batch is
prepared on a worker thread while the current step runs.
"""

from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
import logging
import math

import numpy as np
import torch
from tqdm import tqdm

from src.config import CurriculumConfig, ModelConfig, TrainConfig
from src.data_generation.prompts import PromptDistribution, sample_training_batch
from src.data_generation.tokens import mask_token_arrays, tokenize_arrays
from src.errors import TrainingDivergedError
from src.models.checkpoint import checkpoint_exists, load_checkpoint, save_checkpoint
from src.models.transformer import RegressionTransformer, batch_loss, build_model

logger = logging.getLogger(__name__)


def curriculum_state(step: int, curriculum: CurriculumConfig) -> tuple[int, int]:
    """
    Curriculum position at ``step``.

    Returns:
        (d_start, k_start): trailing input dimensions to zero and number of
        context pairs to show
    """
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    periods = step // curriculum.period
    d_start = max(0, curriculum.d_start_init + curriculum.d_step * periods)
    k_start = min(curriculum.k_end, curriculum.k_start_init + curriculum.k_step * periods)
    return d_start, k_start


@dataclass
class TrainingRun:
    """
    Result of a call to ``train``.

    Attributes:
        model: Trained model
        losses: Loss of every step run in this call, in order
        start_step: Step the run started (or resumed) from
        final_step: Number of completed steps
    """
    model: RegressionTransformer
    losses: list[float] = field(default_factory=list)
    start_step: int = 0
    final_step: int = 0


def _make_optimizer(model: RegressionTransformer, config: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)


def _prepare_batch(
    distribution: PromptDistribution,
    config: TrainConfig,
    step: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    d_start, k_start = curriculum_state(step, config.curriculum)
    batch = sample_training_batch(
        distribution,
        config.batch_size,
        np.random.SeedSequence([config.seed, step]),
        scales=config.train_scales,
    )
    # labels come from the dimension-masked inputs; the token mask then truncates to k_start
    relabeled = batch.masked(d_start, batch.k)
    tokens = mask_token_arrays(tokenize_arrays(relabeled.xs, relabeled.ys), d_start, k_start)
    targets = relabeled.ys[:, : k_start + 1]
    return torch.as_tensor(tokens, dtype=torch.float32), torch.as_tensor(targets)


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    distribution: PromptDistribution,
    checkpoint_path: Optional[Path] = None,
    resume: bool = True,
    stop_at: Optional[int] = None,
    progress: bool = True,
) -> TrainingRun:
    """
    Train a transformer from scratch (or resume from ``checkpoint_path``).

    Args:
        model_config: Architecture and initialization seed
        train_config: Optimizer, curriculum and sampling settings
        distribution: Prompt distribution to sample training batches from
        checkpoint_path: Checkpoint stem; written every ``checkpoint_every``
            steps and at the end
        resume: Continue from an existing checkpoint at ``checkpoint_path``
        stop_at: Stop after this many completed steps (defaults to
            ``train_config.steps``)
        progress: Show a progress bar

    Returns:
        TrainingRun with the model and per-step losses

    Raises:
        TrainingDivergedError: If the loss becomes non-finite
    """
    if distribution.d != model_config.token_dim:
        raise ValueError(
            f"Distribution dimension {distribution.d} does not match token_dim {model_config.token_dim}"
        )
    if 2 * distribution.k + 1 > model_config.max_positions:
        raise ValueError(
            f"Prompts of k={distribution.k} need {2 * distribution.k + 1} positions, "
            f"model has {model_config.max_positions}"
        )

    start_step = 0
    if checkpoint_path is not None and resume and checkpoint_exists(checkpoint_path):
        model, state, optimizer = load_checkpoint(
            checkpoint_path, optimizer_factory=lambda m: _make_optimizer(m, train_config)
        )
        start_step = state.step
        logger.info("Resuming training from step %d", start_step)
    else:
        model = build_model(model_config)
        optimizer = _make_optimizer(model, train_config)

    end_step = train_config.steps if stop_at is None else min(stop_at, train_config.steps)
    seeds = {"model_seed": model_config.seed, "train_seed": train_config.seed}
    run = TrainingRun(model=model, start_step=start_step, final_step=start_step)
    if start_step >= end_step:
        return run

    model.train()
    bar = tqdm(range(start_step, end_step), desc="training", disable=not progress, leave=False)
    with ThreadPoolExecutor(max_workers=1) as sampler:
        pending: Future = sampler.submit(_prepare_batch, distribution, train_config, start_step)
        for step in bar:
            tokens, ys = pending.result()
            if step + 1 < end_step:
                pending = sampler.submit(_prepare_batch, distribution, train_config, step + 1)

            preds, _ = model(tokens)
            loss = batch_loss(preds, ys, include_query=train_config.include_query_loss)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(step, value)

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            if train_config.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), train_config.grad_clip)
            optimizer.step()

            run.losses.append(value)
            run.final_step = step + 1

            if train_config.log_every and run.final_step % train_config.log_every == 0:
                d_start, k_start = curriculum_state(step, train_config.curriculum)
                logger.info(
                    "step %d: loss %.5f (d_start=%d, k_start=%d)", run.final_step, value, d_start, k_start
                )
                bar.set_postfix(loss=f"{value:.4f}")
            if (
                checkpoint_path is not None
                and train_config.checkpoint_every
                and run.final_step % train_config.checkpoint_every == 0
            ):
                save_checkpoint(checkpoint_path, model, run.final_step, seeds, optimizer)

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model, run.final_step, seeds, optimizer)
    model.eval()
    return run
