"""
Prompt distributions and samplers.

A prompt distribution D(P_w, P_x) draws a task w = P_w w_g and inputs
x_i = s * P_x x_g,i with w_g, x_g,i ~ N(0, I_d), labels y_i = w^T x_i + eps
with eps ~ N(0, sigma^2). Each prompt seed is split into three independent
substreams (task, inputs, noise), so prompts that share a seed share their
underlying Gaussian draws. Blending experiments rely on this to reuse x_g
across values of t.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from src.data_generation.subspaces import SubspacePair
from src.linalg import Matrix, make_generator


@dataclass(frozen=True, eq=False)
class PromptDistribution:
    """
    Distribution D(P_w, P_x) over prompts of k context pairs plus a query.

    Attributes:
        d: Ambient dimension
        k: Number of labeled context pairs
        p_w: Projection applied to the task vector (None means identity)
        p_x: Projection applied to every input (None means identity)
        noise_sigma: Standard deviation of label noise
        scale: Multiplier applied to every input
        name: Short descriptor written into prompt metadata
    """
    d: int
    k: int
    p_w: Optional[Matrix] = None
    p_x: Optional[Matrix] = None
    noise_sigma: float = 0.0
    scale: float = 1.0
    name: str = "full"

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise ValueError(f"d and k must be positive, got d={self.d}, k={self.k}")
        for label, proj in (("p_w", self.p_w), ("p_x", self.p_x)):
            if proj is not None and proj.shape != (self.d, self.d):
                raise ValueError(f"{label} must be {self.d}x{self.d}, got {proj.shape}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @classmethod
    def full(cls, d: int, k: int) -> "PromptDistribution":
        """Unrestricted tasks and inputs."""
        return cls(d=d, k=k, name="full")

    @classmethod
    def input_restricted(cls, pair: SubspacePair, k: int, orthogonal: bool = False) -> "PromptDistribution":
        """Inputs projected onto A (or onto B when ``orthogonal``)."""
        proj = pair.p_b if orthogonal else pair.p_a
        name = "input_orthogonal" if orthogonal else "input_subspace"
        return cls(d=pair.dim_ambient, k=k, p_x=proj, name=name)

    @classmethod
    def weight_restricted(cls, pair: SubspacePair, k: int, orthogonal: bool = False) -> "PromptDistribution":
        """Task vectors projected onto A (or onto B when ``orthogonal``)."""
        proj = pair.p_b if orthogonal else pair.p_a
        name = "weight_orthogonal" if orthogonal else "weight_subspace"
        return cls(d=pair.dim_ambient, k=k, p_w=proj, name=name)

    def with_noise(self, sigma: float) -> "PromptDistribution":
        return replace(self, noise_sigma=sigma)

    def with_scale(self, scale: float) -> "PromptDistribution":
        return replace(self, scale=scale)

    def descriptor(self) -> dict:
        return {"name": self.name, "noise_sigma": self.noise_sigma, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class Prompt:
    """
    One regression prompt.

    ``ys[-1]`` is the query's label: it is never shown to a model and is
    kept only for evaluation.

    Attributes:
        xs: (k+1) x d inputs, the last row is the query
        ys: k+1 labels including label noise
        w: Task vector that generated the labels
        noise: Label noise added to each label (zeros when noiseless)
        meta: Distribution descriptor and seed
    """
    xs: Matrix
    ys: np.ndarray
    w: np.ndarray
    noise: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.xs.shape[0] - 1

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    @property
    def seed(self) -> Optional[int]:
        return self.meta.get("seed")

    @property
    def targets(self) -> np.ndarray:
        """Noiseless labels w^T x_i used to score predictions."""
        return self.xs @ self.w


def _substreams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    task, inputs, noise = np.random.SeedSequence(seed).spawn(3)
    return make_generator(task), make_generator(inputs), make_generator(noise)


def _label(xs: Matrix, w: np.ndarray, noise_sigma: float, noise_rng: np.random.Generator):
    noise = np.zeros(xs.shape[0])
    if noise_sigma > 0:
        noise = noise_sigma * noise_rng.standard_normal(xs.shape[0])
    return xs @ w + noise, noise


def sample_prompt(dist: PromptDistribution, seed: int) -> Prompt:
    """
    Draw one prompt from ``dist``.

    w = P_w w_g, x_i = scale * P_x x_g,i and y_i = w^T x_i + eps for k+1
    pairs. Identical (distribution, seed) gives bit-identical prompts.
    """
    task_rng, input_rng, noise_rng = _substreams(seed)
    w = task_rng.standard_normal(dist.d)
    x_g = input_rng.standard_normal((dist.k + 1, dist.d))

    if dist.p_w is not None:
        w = dist.p_w @ w
    xs = x_g if dist.p_x is None else x_g @ dist.p_x
    if dist.scale != 1.0:
        xs = dist.scale * xs

    ys, noise = _label(xs, w, dist.noise_sigma, noise_rng)
    return Prompt(xs=xs, ys=ys, w=w, noise=noise, meta={**dist.descriptor(), "seed": seed})


def sample_prompts(dist: PromptDistribution, n: int, base_seed: int) -> list[Prompt]:
    """``n`` prompts with consecutive seeds starting at ``base_seed``."""
    return [sample_prompt(dist, base_seed + i) for i in range(n)]


def _check_t(t: float) -> None:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"Blend coefficient t must lie in [0, 1], got {t}")


def blend_input_prompt(
    pair: SubspacePair,
    t: float,
    seed: int,
    k: int,
    noise_sigma: float = 0.0,
) -> Prompt:
    """
    Prompt whose inputs are t * P_A x_g + (1 - t) * P_B x_g.

    A single x_g draw is shared by both components; t = 1 reproduces the
    training-subspace distribution and t = 0 the orthogonal one. Tasks are
    full-space Gaussian.
    """
    _check_t(t)
    task_rng, input_rng, noise_rng = _substreams(seed)
    w = task_rng.standard_normal(pair.dim_ambient)
    x_g = input_rng.standard_normal((k + 1, pair.dim_ambient))

    xs = t * (x_g @ pair.p_a) + (1.0 - t) * (x_g @ pair.p_b)
    ys, noise = _label(xs, w, noise_sigma, noise_rng)
    meta = {"name": "input_blend", "t": t, "noise_sigma": noise_sigma, "scale": 1.0, "seed": seed}
    return Prompt(xs=xs, ys=ys, w=w, noise=noise, meta=meta)


def blend_weight_prompt(
    pair: SubspacePair,
    t: float,
    seed: int,
    k: int,
    noise_sigma: float = 0.0,
) -> Prompt:
    """
    Prompt whose task is t * P_A w_g + (1 - t) * P_B w_g.

    Inputs are full-space Gaussian and shared across t for a fixed seed.
    """
    _check_t(t)
    task_rng, input_rng, noise_rng = _substreams(seed)
    w_g = task_rng.standard_normal(pair.dim_ambient)
    xs = input_rng.standard_normal((k + 1, pair.dim_ambient))

    w = t * (pair.p_a @ w_g) + (1.0 - t) * (pair.p_b @ w_g)
    ys, noise = _label(xs, w, noise_sigma, noise_rng)
    meta = {"name": "weight_blend", "t": t, "noise_sigma": noise_sigma, "scale": 1.0, "seed": seed}
    return Prompt(xs=xs, ys=ys, w=w, noise=noise, meta=meta)


def mask_prompt(prompt: Prompt, d_start: int, k_start: int) -> Prompt:
    """
    Curriculum view of a prompt.

    Keeps the first k_start pairs and the next input as query, zeroes the
    trailing d_start input coordinates and regenerates labels from the
    masked inputs with the prompt's own noise draw.
    """
    if not 0 <= d_start < prompt.d:
        raise ValueError(f"d_start must lie in [0, {prompt.d}), got {d_start}")
    if not 1 <= k_start <= prompt.k:
        raise ValueError(f"k_start must lie in [1, {prompt.k}], got {k_start}")

    xs = prompt.xs[: k_start + 1].copy()
    if d_start:
        xs[:, prompt.d - d_start:] = 0.0
    noise = prompt.noise[: k_start + 1]
    ys = xs @ prompt.w + noise
    meta = {**prompt.meta, "d_start": d_start, "k_start": k_start}
    return Prompt(xs=xs, ys=ys, w=prompt.w, noise=noise, meta=meta)


@dataclass(frozen=True, eq=False)
class PromptBatch:
    """
    A stacked batch of prompts for training.

    Attributes:
        xs: (b, k+1, d) inputs
        ys: (b, k+1) labels
        ws: (b, d) task vectors
        noise: (b, k+1) label noise
        scale: Input scale used for this batch
    """
    xs: np.ndarray
    ys: np.ndarray
    ws: np.ndarray
    noise: np.ndarray
    scale: float = 1.0

    def __len__(self) -> int:
        return self.xs.shape[0]

    @property
    def k(self) -> int:
        return self.xs.shape[1] - 1

    def masked(self, d_start: int, k_start: int) -> "PromptBatch":
        """Batched ``mask_prompt``."""
        d = self.xs.shape[2]
        xs = self.xs[:, : k_start + 1].copy()
        if d_start:
            xs[:, :, d - d_start:] = 0.0
        noise = self.noise[:, : k_start + 1]
        ys = np.einsum("bnd,bd->bn", xs, self.ws) + noise
        return PromptBatch(xs=xs, ys=ys, ws=self.ws, noise=noise, scale=self.scale)


def sample_training_batch(
    dist: PromptDistribution,
    batch_size: int,
    seed,
    scales: Optional[Sequence[float]] = None,
) -> PromptBatch:
    """
    Vectorized draw of ``batch_size`` prompts.

    When ``scales`` is given, one scale is chosen uniformly for the whole
    batch and replaces ``dist.scale``.

    Args:
        dist: Prompt distribution
        batch_size: Number of prompts
        seed: Int or SeedSequence for this batch
        scales: Optional set of input scales to choose from
    """
    rng = make_generator(np.random.SeedSequence(seed) if isinstance(seed, int) else seed)
    scale = float(rng.choice(np.asarray(scales, dtype=np.float64))) if scales else dist.scale

    ws = rng.standard_normal((batch_size, dist.d))
    x_g = rng.standard_normal((batch_size, dist.k + 1, dist.d))
    if dist.p_w is not None:
        ws = ws @ dist.p_w
    xs = x_g if dist.p_x is None else x_g @ dist.p_x
    xs = scale * xs

    noise = np.zeros((batch_size, dist.k + 1))
    if dist.noise_sigma > 0:
        noise = dist.noise_sigma * rng.standard_normal((batch_size, dist.k + 1))
    ys = np.einsum("bnd,bd->bn", xs, ws) + noise
    return PromptBatch(xs=xs, ys=ys, ws=ws, noise=noise, scale=scale)
