"""Prompt generation: subspaces, distributions, tokens and batch storage."""

from .subspaces import SubspacePair, make_subspace_pair
from .prompts import (
    Prompt,
    PromptBatch,
    PromptDistribution,
    blend_input_prompt,
    blend_weight_prompt,
    mask_prompt,
    sample_prompt,
    sample_prompts,
    sample_training_batch,
)
from .tokens import TokenSequence, curriculum_mask, detokenize, mask_token_arrays, tokenize, tokenize_arrays
from .prompt_io import PromptLoader

__all__ = [
    "SubspacePair",
    "make_subspace_pair",
    "Prompt",
    "PromptBatch",
    "PromptDistribution",
    "blend_input_prompt",
    "blend_weight_prompt",
    "mask_prompt",
    "sample_prompt",
    "sample_prompts",
    "sample_training_batch",
    "TokenSequence",
    "curriculum_mask",
    "detokenize",
    "mask_token_arrays",
    "tokenize",
    "tokenize_arrays",
    "PromptLoader",
]
