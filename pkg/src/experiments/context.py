"""
Shared state for one experiment run: the subspace pair, the named prompt
distributions, deterministic prompt batches and the trained models.
"""

from dataclasses import replace
from pathlib import Path
from typing import Optional
import logging

from src.config import ExperimentConfig, SourceTag
from src.data_generation.prompts import Prompt, PromptDistribution, sample_prompts
from src.data_generation.subspaces import SubspacePair, make_subspace_pair
from src.errors import ConfigError, MissingCheckpointError
from src.models.checkpoint import checkpoint_exists, load_checkpoint
from src.models.training import train
from src.models.transformer import RegressionTransformer

logger = logging.getLogger(__name__)

# Each role gets its own block of prompt seeds so batches never overlap
SEED_BLOCKS = {
    "eval": 0,
    "pool": 1,
    "fit": 2,
    "heldout": 3,
    "implicit": 4,
    "blend": 5,
    "scale": 6,
}
SEED_BLOCK_WIDTH = 100_000
SEED_RUN_WIDTH = 10_000_000

# model name -> (training distribution key, uses label noise, multi-scale)
MODEL_SPECS: dict[str, tuple[str, bool, bool]] = {
    "t_parallel": ("input_subspace", False, False),
    "t_full": ("full", False, False),
    "t_full_noisy": ("full", True, False),
    "t_parallel_noisy": ("input_subspace", True, False),
    "t_full_multiscale": ("full", False, True),
    "t_weight": ("weight_subspace", False, False),
}


class ExperimentContext:
    """
    Lazily builds everything an experiment needs from one config.

    Models are loaded from ``<output>/checkpoints/<name>`` or, when
    ``train_first`` is set, trained (resuming any partial checkpoint).

    Example:
        >>> ctx = ExperimentContext(build_config("desk", overrides={"steps": "100"}))
        >>> prompts = ctx.prompts(ctx.distribution("input_subspace"), "eval")
        >>> model = ctx.model("t_parallel")
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.pair = make_subspace_pair(config.d, config.q, config.subspace_seed)
        self.out_dir = Path(config.output_dir) / config.experiment_id
        self.checkpoint_dir = Path(config.output_dir) / "checkpoints"
        self._models: dict[str, RegressionTransformer] = {}
        self._pairs: dict[int, SubspacePair] = {config.q: self.pair}

    # -------------------------------------------------------------------------
    # Distributions and prompts
    # -------------------------------------------------------------------------

    def subspace_pair(self, q: Optional[int] = None) -> SubspacePair:
        """Subspace pair for dimension q (defaults to the configured q)."""
        q = self.config.q if q is None else q
        if q not in self._pairs:
            self._pairs[q] = make_subspace_pair(self.config.d, q, self.config.subspace_seed)
        return self._pairs[q]

    def distribution(self, key: str, q: Optional[int] = None) -> PromptDistribution:
        """
        Named noiseless distribution at unit scale.

        Keys: input_subspace, input_orthogonal, weight_subspace,
        weight_orthogonal, full.
        """
        pair = self.subspace_pair(q)
        k = self.config.k
        if key == "full":
            return PromptDistribution.full(self.config.d, k)
        if key == "input_subspace":
            return PromptDistribution.input_restricted(pair, k)
        if key == "input_orthogonal":
            return PromptDistribution.input_restricted(pair, k, orthogonal=True)
        if key == "weight_subspace":
            return PromptDistribution.weight_restricted(pair, k)
        if key == "weight_orthogonal":
            return PromptDistribution.weight_restricted(pair, k, orthogonal=True)
        raise ValueError(
            f"Unknown distribution: {key}. Valid keys: "
            f"['full', 'input_subspace', 'input_orthogonal', 'weight_subspace', 'weight_orthogonal']"
        )

    def seed_base(self, role: str) -> int:
        if role not in SEED_BLOCKS:
            raise ValueError(f"Unknown seed role: {role}. Valid roles: {list(SEED_BLOCKS)}")
        return self.config.seed * SEED_RUN_WIDTH + SEED_BLOCKS[role] * SEED_BLOCK_WIDTH

    def prompts(self, dist: PromptDistribution, role: str = "eval", count: Optional[int] = None) -> list[Prompt]:
        """Deterministic batch for ``role`` (``eval_batch`` prompts by default)."""
        count = self.config.eval_batch if count is None else count
        if count > SEED_BLOCK_WIDTH:
            raise ValueError(f"At most {SEED_BLOCK_WIDTH} prompts per role, got {count}")
        return sample_prompts(dist, count, self.seed_base(role))

    def require_noise(self) -> float:
        if self.config.noise_sigma is None:
            raise ConfigError(
                f"Experiment {self.config.experiment_id!r} needs noise_sigma; set it in the config file"
            )
        return self.config.noise_sigma

    # -------------------------------------------------------------------------
    # Models
    # -------------------------------------------------------------------------

    def training_distribution(self, name: str) -> PromptDistribution:
        if name.startswith("t_weight_q"):
            return self.distribution("weight_subspace", q=int(name[len("t_weight_q"):]))
        if name not in MODEL_SPECS:
            raise ValueError(f"Unknown model: {name}. Valid models: {list(MODEL_SPECS)} or t_weight_q<q>")
        key, noisy, _ = MODEL_SPECS[name]
        dist = self.distribution(key)
        return dist.with_noise(self.require_noise()) if noisy else dist

    def model(self, name: str) -> RegressionTransformer:
        """Trained model by name, loading or training as configured."""
        if name in self._models:
            return self._models[name]

        stem = self.checkpoint_dir / name
        train_config = self.config.train
        if MODEL_SPECS.get(name, ("", False, False))[2]:
            train_config = replace(train_config, train_scales=self.config.train_scales)

        if self.config.train_first:
            logger.info("Training %s for %d steps", name, train_config.steps)
            run = train(self.config.model, train_config, self.training_distribution(name), stem)
            model = run.model
        elif checkpoint_exists(stem):
            model, state, _ = load_checkpoint(stem)
            if state.step < train_config.steps:
                logger.warning("Checkpoint %s stopped at step %d of %d", stem, state.step, train_config.steps)
        else:
            raise MissingCheckpointError(
                f"No checkpoint for {name} at {stem}; rerun with --train-first to train it"
            )

        model.eval()
        self._models[name] = model
        return model

    @staticmethod
    def source_tag(dist: PromptDistribution) -> SourceTag:
        if dist.name.endswith("_subspace"):
            return SourceTag.TRAINING_SUBSPACE
        if dist.name.endswith("_orthogonal"):
            return SourceTag.ORTHOGONAL
        if dist.name == "full":
            return SourceTag.FULL
        return SourceTag.CUSTOM
