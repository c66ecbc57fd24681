"""
Configuration for in-context regression experiments.

Contains model, training, baseline and detector settings, the two named
presets (``large`` and ``desk``), and the flat key-value config file format
read by the experiment CLI.
"""

from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional
import os

from src.errors import ConfigError


class Preset(Enum):
    """Named experiment scales."""
    DESK = "desk"
    LARGE = "large"


class SourceTag(Enum):
    """Distribution a batch of prompts was drawn from."""
    TRAINING_SUBSPACE = "training_subspace"
    ORTHOGONAL = "orthogonal"
    FULL = "full"
    CUSTOM = "custom"


@dataclass
class ModelConfig:
    """
    Architecture of the decoder-only transformer.

    Attributes:
        layers: Number of transformer blocks
        heads: Attention heads per block
        hidden: Residual stream width m
        token_dim: Token dimension d (equal to the regression dimension)
        max_positions: Longest accepted token sequence (at least 2k+1)
        seed: Seed for parameter initialization
    """
    layers: int = 4
    heads: int = 4
    hidden: int = 64
    token_dim: int = 8
    max_positions: int = 33
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1:
            raise ConfigError(f"layers and heads must be positive, got {self.layers}, {self.heads}")
        if self.hidden % self.heads != 0:
            raise ConfigError(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if self.max_positions < 2:
            raise ConfigError(f"max_positions must be at least 2, got {self.max_positions}")


@dataclass
class CurriculumConfig:
    """
    Curriculum schedule: every ``period`` steps the number of zeroed
    trailing input dimensions moves by ``d_step`` and the number of
    context pairs by ``k_step``, until no dimension is masked and
    ``k_end`` pairs are shown.
    """
    d_start_init: int = 5
    k_start_init: int = 5
    period: int = 1000
    d_step: int = -1
    k_step: int = 2
    k_end: int = 16

    def __post_init__(self):
        if self.period < 1:
            raise ConfigError(f"Curriculum period must be positive, got {self.period}")
        if self.d_start_init < 0:
            raise ConfigError(f"d_start_init must be non-negative, got {self.d_start_init}")
        if not 1 <= self.k_start_init <= self.k_end:
            raise ConfigError(
                f"k_start_init must lie in [1, {self.k_end}], got {self.k_start_init}"
            )

    @classmethod
    def inactive(cls, k: int) -> "CurriculumConfig":
        """Schedule whose mask is a no-op at every step."""
        return cls(d_start_init=0, k_start_init=k, period=1, d_step=0, k_step=0, k_end=k)


@dataclass
class TrainConfig:
    """
    Optimization settings.

    Defaults are desk-scale choices.
    """
    steps: int = 50_000
    batch_size: int = 64
    learning_rate: float = 3e-4
    weight_decay: float = 0.0
    grad_clip: Optional[float] = 1.0
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    include_query_loss: bool = True
    seed: int = 0
    checkpoint_every: int = 1000
    log_every: int = 500
    train_scales: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"steps must be non-negative, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")


@dataclass
class BaselineConfig:
    """
    Hyperparameters of the classical regressors.

    All of these are free sweep parameters.
    """
    ridge_lambda: float = 0.01
    bayes_tau: float = 1.0
    bayes_sigma: float = 1.0
    bayes_samples: int = 64
    kernel_lambda: float = 0.01
    kernel_sigma: Optional[float] = None  # None -> sqrt(d)
    gd_eta: float = 0.01
    gd_iters: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.ridge_lambda < 0:
            raise ConfigError(f"ridge_lambda must be non-negative, got {self.ridge_lambda}")
        if self.bayes_tau <= 0 or self.bayes_sigma <= 0:
            raise ConfigError("bayes_tau and bayes_sigma must be positive")
        if self.bayes_samples < 1:
            raise ConfigError(f"bayes_samples must be at least 1, got {self.bayes_samples}")
        if self.gd_eta <= 0:
            raise ConfigError(f"gd_eta must be positive, got {self.gd_eta}")

    def kernel_bandwidth(self, d: int) -> float:
        """RBF bandwidth, defaulting to sqrt(d)."""
        return self.kernel_sigma if self.kernel_sigma is not None else float(d) ** 0.5


@dataclass
class DetectorConfig:
    """Repeated-trial protocol for the signature OOD detector."""
    fit_size: int = 64
    eval_size: int = 64
    trials: int = 20
    confidence: float = 0.95
    pool_size: int = 20

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ConfigError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")


# =============================================================================
# PATHS
# =============================================================================

PROJECT_ROOT = Path(__file__).parent.parent
CONFIG_DIR = PROJECT_ROOT / "configs"
OUTPUT_ENV_VAR = "ICL_SPECTRA_OUTPUT"


def default_output_root() -> Path:
    """Output root from ``ICL_SPECTRA_OUTPUT`` or ``<project>/output``."""
    return Path(os.environ.get(OUTPUT_ENV_VAR, PROJECT_ROOT / "output"))


@dataclass
class ExperimentConfig:
    """
    Everything an experiment needs to run reproducibly.

    ``noise_sigma`` has no default; experiments that need it require an
    explicit value.
    """
    preset: Preset = Preset.DESK
    experiment_id: str = ""
    d: int = 8
    q: int = 4
    k: int = 16
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    noise_sigma: Optional[float] = None
    scales: tuple[float, ...] = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 5.0, 10.0)
    train_scales: tuple[float, ...] = (1.0, 2.0, 3.0)
    blend_grid: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))
    vary_dims: tuple[int, ...] = (2, 4, 6)
    extra_baselines: tuple[str, ...] = ()
    eval_batch: int = 128
    implicit_prompts: int = 64
    implicit_queries: Optional[int] = None  # None -> 2d
    seed: int = 0
    subspace_seed: int = 0
    output_dir: Path = field(default_factory=default_output_root)
    train_first: bool = False
    parallel_eval: int = 1

    def __post_init__(self):
        if not 1 <= self.q < self.d:
            raise ConfigError(f"Subspace dimension q must satisfy 1 <= q < d, got q={self.q}, d={self.d}")
        if self.k < 1:
            raise ConfigError(f"Context length k must be positive, got {self.k}")
        if self.eval_batch < 1:
            raise ConfigError(f"eval_batch must be positive, got {self.eval_batch}")
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be non-negative, got {self.noise_sigma}")

    @property
    def query_count(self) -> int:
        """Number of query inputs used for implicit weight extraction."""
        return self.implicit_queries if self.implicit_queries is not None else 2 * self.d

    def synchronized(self) -> "ExperimentConfig":
        """
        Return a copy whose model and curriculum agree with (d, k).

        The token dimension is d, sequences hold 2k+1 tokens, and the
        curriculum ends at k pairs with fewer than d masked dimensions.
        """
        curriculum = self.train.curriculum
        curriculum = replace(
            curriculum,
            k_end=self.k,
            k_start_init=min(curriculum.k_start_init, self.k),
            d_start_init=min(curriculum.d_start_init, self.d - 1),
        )
        model = replace(
            self.model,
            token_dim=self.d,
            max_positions=max(self.model.max_positions, 2 * self.k + 1),
        )
        return replace(self, model=model, train=replace(self.train, curriculum=curriculum))

    def to_dict(self) -> dict:
        """Flat JSON-friendly snapshot for run manifests."""
        snapshot = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, Path):
                value = str(value)
            elif hasattr(value, "__dataclass_fields__"):
                value = _dataclass_to_dict(value)
            elif isinstance(value, tuple):
                value = list(value)
            snapshot[f.name] = value
        return snapshot


def _dataclass_to_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if hasattr(value, "__dataclass_fields__"):
            value = _dataclass_to_dict(value)
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


# =============================================================================
# PRESETS
# =============================================================================

def desk_preset() -> ExperimentConfig:
    """d=8, k=16, q=4 with a 4-layer, 4-head, width-64 model and 50k steps."""
    return ExperimentConfig(
        preset=Preset.DESK,
        d=8, q=4, k=16,
        model=ModelConfig(layers=4, heads=4, hidden=64, token_dim=8, max_positions=33),
        train=TrainConfig(
            steps=50_000,
            learning_rate=3e-4,
            curriculum=CurriculumConfig(
                d_start_init=5, k_start_init=5, period=1000, d_step=-1, k_step=2, k_end=16,
            ),
        ),
        vary_dims=(2, 4, 6),
    )


def large_preset() -> ExperimentConfig:
    """d=20, k=40, q=10 with a 12-layer, 8-head, width-256 model and 500k steps."""
    return ExperimentConfig(
        preset=Preset.LARGE,
        d=20, q=10, k=40,
        model=ModelConfig(layers=12, heads=8, hidden=256, token_dim=20, max_positions=81),
        train=TrainConfig(
            steps=500_000,
            learning_rate=1e-4,
            checkpoint_every=10_000,
            curriculum=CurriculumConfig(
                d_start_init=15, k_start_init=11, period=2000, d_step=-1, k_step=2, k_end=40,
            ),
        ),
        vary_dims=(5, 10, 15),
    )


PRESETS: dict[Preset, Callable[[], ExperimentConfig]] = {
    Preset.DESK: desk_preset,
    Preset.LARGE: large_preset,
}


def get_preset(name: str) -> ExperimentConfig:
    """Get a fresh preset configuration by name."""
    try:
        preset = Preset(name)
    except ValueError:
        raise ConfigError(
            f"Unknown preset: {name}. Valid presets: {[p.value for p in Preset]}"
        ) from None
    return PRESETS[preset]()


# =============================================================================
# CONFIG FILES
# =============================================================================

def _tuple_of(cast: Callable) -> Callable[[str], tuple]:
    def parse(raw: str) -> tuple:
        return tuple(cast(part.strip()) for part in raw.split(",") if part.strip())
    return parse


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"Not a boolean: {raw!r}")


def _optional(cast: Callable) -> Callable[[str], object]:
    def parse(raw: str):
        return None if raw.strip().lower() in ("", "none") else cast(raw)
    return parse


# key -> (section, field name, parser); section None means ExperimentConfig itself
CONFIG_KEYS: dict[str, tuple[Optional[str], str, Callable]] = {
    "d": (None, "d", int),
    "q": (None, "q", int),
    "k": (None, "k", int),
    "noise_sigma": (None, "noise_sigma", _optional(float)),
    "scales": (None, "scales", _tuple_of(float)),
    "train_scales": (None, "train_scales", _tuple_of(float)),
    "blend_grid": (None, "blend_grid", _tuple_of(float)),
    "vary_dims": (None, "vary_dims", _tuple_of(int)),
    "extra_baselines": (None, "extra_baselines", _tuple_of(str)),
    "eval_batch": (None, "eval_batch", int),
    "implicit_prompts": (None, "implicit_prompts", int),
    "implicit_queries": (None, "implicit_queries", _optional(int)),
    "seed": (None, "seed", int),
    "subspace_seed": (None, "subspace_seed", int),
    "output_dir": (None, "output_dir", Path),
    "train_first": (None, "train_first", _parse_bool),
    "parallel_eval": (None, "parallel_eval", int),
    "layers": ("model", "layers", int),
    "heads": ("model", "heads", int),
    "hidden": ("model", "hidden", int),
    "model_seed": ("model", "seed", int),
    "steps": ("train", "steps", int),
    "batch_size": ("train", "batch_size", int),
    "learning_rate": ("train", "learning_rate", float),
    "weight_decay": ("train", "weight_decay", float),
    "grad_clip": ("train", "grad_clip", _optional(float)),
    "include_query_loss": ("train", "include_query_loss", _parse_bool),
    "train_seed": ("train", "seed", int),
    "checkpoint_every": ("train", "checkpoint_every", int),
    "log_every": ("train", "log_every", int),
    "d_start_init": ("curriculum", "d_start_init", int),
    "k_start_init": ("curriculum", "k_start_init", int),
    "curriculum_period": ("curriculum", "period", int),
    "d_step": ("curriculum", "d_step", int),
    "k_step": ("curriculum", "k_step", int),
    "ridge_lambda": ("baselines", "ridge_lambda", float),
    "bayes_tau": ("baselines", "bayes_tau", float),
    "bayes_sigma": ("baselines", "bayes_sigma", float),
    "bayes_samples": ("baselines", "bayes_samples", int),
    "kernel_lambda": ("baselines", "kernel_lambda", float),
    "kernel_sigma": ("baselines", "kernel_sigma", _optional(float)),
    "gd_eta": ("baselines", "gd_eta", float),
    "gd_iters": ("baselines", "gd_iters", int),
    "baseline_seed": ("baselines", "seed", int),
    "detector_fit_size": ("detector", "fit_size", int),
    "detector_eval_size": ("detector", "eval_size", int),
    "detector_trials": ("detector", "trials", int),
    "confidence": ("detector", "confidence", float),
    "pool_size": ("detector", "pool_size", int),
}


def read_config_file(path: Path) -> dict[str, str]:
    """
    Read a flat ``key = value`` config file.

    Blank lines and ``#`` comments are ignored; keys must be listed in
    ``CONFIG_KEYS``.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}. Valid keys: {sorted(CONFIG_KEYS)}")
        values[key] = raw
    return values


def apply_overrides(config: ExperimentConfig, values: dict[str, str]) -> ExperimentConfig:
    """Apply raw string overrides (as read from a config file) to a config."""
    top, sections = {}, {"model": {}, "train": {}, "curriculum": {}, "baselines": {}, "detector": {}}
    for key, raw in values.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"Unknown config key: {key}. Valid keys: {sorted(CONFIG_KEYS)}")
        section, name, parse = CONFIG_KEYS[key]
        try:
            value = parse(raw) if isinstance(raw, str) else raw
        except ValueError as e:
            raise ConfigError(f"Bad value for {key}: {raw!r} ({e})") from None
        (top if section is None else sections[section])[name] = value

    if "k" in top:
        sections["curriculum"].setdefault("k_end", top["k"])
    curriculum = replace(config.train.curriculum, **sections["curriculum"])
    train = replace(config.train, curriculum=curriculum, **sections["train"])
    return replace(
        config,
        model=replace(config.model, **sections["model"]),
        train=train,
        baselines=replace(config.baselines, **sections["baselines"]),
        detector=replace(config.detector, **sections["detector"]),
        **top,
    )


def build_config(
    preset: str = "desk",
    config_path: Optional[Path] = None,
    overrides: Optional[dict[str, str]] = None,
) -> ExperimentConfig:
    """
    Resolve a configuration: preset defaults, then the config file, then
    explicit overrides (CLI flags).
    """
    config = get_preset(preset)
    if config_path is not None:
        config = apply_overrides(config, read_config_file(config_path))
    if overrides:
        config = apply_overrides(config, overrides)
    return config.synchronized()
