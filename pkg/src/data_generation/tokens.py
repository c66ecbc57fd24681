"""
Token layout for prompts.

A prompt (x_1, y_1, ..., x_k, y_k, x_{k+1}) becomes 2k+1 tokens of width d:
x-tokens at even positions, and y-tokens [y_i, 0, ..., 0] after each context
input. The query x_{k+1} is the last token and has no y-token.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.data_generation.prompts import Prompt


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """
    Tokenized prompt.

    Attributes:
        tokens: (2k+1) x d matrix
        x_positions: Indices of the x-tokens (0, 2, ..., 2k)
    """
    tokens: np.ndarray
    x_positions: np.ndarray

    @property
    def k(self) -> int:
        return (self.tokens.shape[0] - 1) // 2

    @property
    def d(self) -> int:
        return self.tokens.shape[1]

    def __len__(self) -> int:
        return self.tokens.shape[0]


def x_positions_for(k: int) -> np.ndarray:
    """Token indices of the k+1 inputs."""
    return np.arange(0, 2 * k + 1, 2)


def tokenize_arrays(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """
    Interleave inputs and labels.

    Works on a single prompt ((k+1, d) and (k+1,)) or a batch
    ((b, k+1, d) and (b, k+1)). The last label is dropped.
    """
    *lead, n, d = xs.shape
    k = n - 1
    tokens = np.zeros((*lead, 2 * k + 1, d), dtype=xs.dtype)
    tokens[..., 0::2, :] = xs
    tokens[..., 1::2, 0] = ys[..., :k]
    return tokens


def tokenize(prompt: Prompt, d: Optional[int] = None) -> TokenSequence:
    """
    Tokenize a prompt.

    Args:
        prompt: Prompt to encode
        d: Configured token dimension; must match the prompt when given
    """
    if d is not None and prompt.d != d:
        raise ValueError(f"Prompt dimension {prompt.d} does not match configured d={d}")
    tokens = tokenize_arrays(prompt.xs, prompt.ys)
    return TokenSequence(tokens=tokens, x_positions=x_positions_for(prompt.k))


def detokenize(seq: TokenSequence) -> tuple[np.ndarray, np.ndarray]:
    """Read back the k+1 inputs and the k context labels."""
    xs = seq.tokens[seq.x_positions]
    ys = seq.tokens[1::2, 0]
    return xs.copy(), ys.copy()


def mask_token_arrays(tokens: np.ndarray, d_start: int, k_start: int) -> np.ndarray:
    """
    Curriculum mask on raw token arrays.

    Works on one sequence ((2k+1, d)) or a batch ((b, 2k+1, d)). Keeps the
    first 2 * k_start + 1 tokens and zeroes the trailing d_start
    coordinates of every kept x-token.
    """
    *_, n, d = tokens.shape
    k = (n - 1) // 2
    if not 0 <= d_start < d:
        raise ValueError(f"d_start must lie in [0, {d}), got {d_start}")
    if not 1 <= k_start <= k:
        raise ValueError(f"k_start must lie in [1, {k}], got {k_start}")

    masked = tokens[..., : 2 * k_start + 1, :].copy()
    if d_start:
        masked[..., 0::2, d - d_start:] = 0.0
    return masked


def curriculum_mask(seq: TokenSequence, d_start: int, k_start: int) -> TokenSequence:
    """
    Token-level curriculum mask.

    Zeroes the trailing d_start coordinates of every x-token and keeps the
    first k_start context pairs followed by the next x-token as query, for
    2 * k_start + 1 tokens in total.
    """
    tokens = mask_token_arrays(seq.tokens, d_start, k_start)
    return TokenSequence(tokens=tokens, x_positions=x_positions_for(k_start))
