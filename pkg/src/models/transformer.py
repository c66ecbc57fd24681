"""
Decoder-only transformer with a scalar readout.

GPT-2 style: a linear read-in of the d-dimensional tokens, learned absolute
position embeddings, pre-norm blocks of causal self-attention and a GELU
MLP, a final LayerNorm, and a linear readout to one scalar per position.
No dropout. The prediction for x_i is read out at the position of x_i.

The vector handed to the readout (after the final LayerNorm) is the
residual-stream representation z(x_i) used by the spectral analysis.
"""

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence
import logging

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.config import ModelConfig
from src.data_generation.prompts import Prompt
from src.data_generation.tokens import TokenSequence, tokenize_arrays
from src.models.trace import PredictionTrace, make_trace

logger = logging.getLogger(__name__)

INIT_STD = 0.02


class CausalSelfAttention(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_head = config.heads
        self.n_embd = config.hidden
        self.c_attn = nn.Linear(config.hidden, 3 * config.hidden)
        self.c_proj = nn.Linear(config.hidden, config.hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, T, C = x.size()
        q, k, v = self.c_attn(x).split(self.n_embd, dim=2)
        # (B, nh, T, hs)
        q = q.view(B, T, self.n_head, C // self.n_head).transpose(1, 2)
        k = k.view(B, T, self.n_head, C // self.n_head).transpose(1, 2)
        v = v.view(B, T, self.n_head, C // self.n_head).transpose(1, 2)
        y = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        y = y.transpose(1, 2).contiguous().view(B, T, C)
        return self.c_proj(y)


class MLP(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.c_fc = nn.Linear(config.hidden, 4 * config.hidden)
        self.gelu = nn.GELU(approximate="tanh")
        self.c_proj = nn.Linear(4 * config.hidden, config.hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.c_proj(self.gelu(self.c_fc(x)))


class Block(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.ln_1 = nn.LayerNorm(config.hidden)
        self.attn = CausalSelfAttention(config)
        self.ln_2 = nn.LayerNorm(config.hidden)
        self.mlp = MLP(config)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln_1(x))
        x = x + self.mlp(self.ln_2(x))
        return x


class RegressionTransformer(nn.Module):
    """
    Transformer over real-valued tokens with one scalar output per position.

    ``forward`` returns both the per-position predictions and the
    post-final-norm hidden states, so capturing the residual stream never
    changes the predictions.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.read_in = nn.Linear(config.token_dim, config.hidden)
        self.wpe = nn.Embedding(config.max_positions, config.hidden)
        self.h = nn.ModuleList([Block(config) for _ in range(config.layers)])
        self.ln_f = nn.LayerNorm(config.hidden)
        self.readout = nn.Linear(config.hidden, 1)

    def forward(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            tokens: (B, T, d) token batch

        Returns:
            (predictions (B, T), hidden (B, T, m))
        """
        B, T, _ = tokens.size()
        if T > self.config.max_positions:
            raise ValueError(
                f"Cannot forward sequence of length {T}, max_positions is {self.config.max_positions}"
            )
        pos = torch.arange(0, T, dtype=torch.long, device=tokens.device)
        x = self.read_in(tokens) + self.wpe(pos)
        for block in self.h:
            x = block(x)
        hidden = self.ln_f(x)
        return self.readout(hidden).squeeze(-1), hidden

    @property
    def dtype(self) -> torch.dtype:
        return self.read_in.weight.dtype

    def readout_direction(self) -> np.ndarray:
        """Readout weight vector f (excluding bias) as float64."""
        return self.readout.weight.detach().cpu().double().numpy()[0].copy()

    def readout_bias(self) -> float:
        return float(self.readout.bias.detach().cpu().double().item())

    @torch.no_grad()
    def predict_queries(self, context_xs: np.ndarray, context_ys: np.ndarray, queries: np.ndarray) -> np.ndarray:
        """
        Predict each query conditioned on one fixed context.

        Args:
            context_xs: (k, d) context inputs
            context_ys: (k,) context labels
            queries: (n, d) query inputs

        Returns:
            (n,) predictions read out at the query position
        """
        n = queries.shape[0]
        xs = np.concatenate([np.broadcast_to(context_xs, (n, *context_xs.shape)), queries[:, None, :]], axis=1)
        ys = np.concatenate([np.broadcast_to(context_ys, (n, context_ys.shape[0])), np.zeros((n, 1))], axis=1)
        preds, _ = forward_batch(self, tokenize_arrays(xs, ys))
        return preds[:, -1]


class QueryPredictor(Protocol):
    """Anything that predicts queries from a fixed context."""

    def predict_queries(self, context_xs: np.ndarray, context_ys: np.ndarray, queries: np.ndarray) -> np.ndarray:
        ...


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Linear):
        nn.init.normal_(module.weight, mean=0.0, std=INIT_STD)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Embedding):
        nn.init.normal_(module.weight, mean=0.0, std=INIT_STD)


def build_model(config: ModelConfig) -> RegressionTransformer:
    """Freshly initialized model; initialization depends only on ``config.seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = RegressionTransformer(config)
        model.apply(_init_weights)
    n_params = sum(p.numel() for p in model.parameters())
    logger.info(
        "Built transformer: %d layers, %d heads, width %d (%d parameters)",
        config.layers, config.heads, config.hidden, n_params,
    )
    return model


@dataclass
class ForwardOutput:
    """
    Outputs at the x-token positions of one prompt.

    Attributes:
        predictions: k+1 predictions, one per x-token
        residuals: Optional (k+1) x m pre-readout vectors z(x_i)
    """
    predictions: np.ndarray
    residuals: Optional[np.ndarray] = None


@torch.no_grad()
def forward_batch(model: RegressionTransformer, tokens: np.ndarray, capture: bool = False) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Batched forward pass at x-token positions.

    Args:
        model: Transformer
        tokens: (B, 2k+1, d) token array
        capture: Also return post-final-norm vectors at x positions

    Returns:
        (predictions (B, k+1), residuals (B, k+1, m) or None), float64
    """
    if tokens.shape[1] > model.config.max_positions:
        raise ValueError(
            f"Sequence of {tokens.shape[1]} tokens exceeds max_positions={model.config.max_positions}"
        )
    was_training = model.training
    model.eval()
    batch = torch.as_tensor(tokens, dtype=model.dtype)
    preds, hidden = model(batch)
    model.train(was_training)

    predictions = preds[:, 0::2].double().numpy()
    residuals = hidden[:, 0::2].double().numpy() if capture else None
    return predictions, residuals


def forward(model: RegressionTransformer, tokens: TokenSequence, capture: bool = False) -> ForwardOutput:
    """Forward one tokenized prompt."""
    preds, residuals = forward_batch(model, tokens.tokens[None], capture=capture)
    return ForwardOutput(
        predictions=preds[0],
        residuals=residuals[0] if residuals is not None else None,
    )


def loss(output: ForwardOutput, prompt: Prompt, include_query: bool = True) -> float:
    """Mean squared difference between predictions and the prompt's labels."""
    if output.predictions.shape != prompt.ys.shape:
        raise ValueError(
            f"Prediction shape {output.predictions.shape} does not match labels {prompt.ys.shape}"
        )
    diff = output.predictions - prompt.ys
    if not include_query:
        diff = diff[:-1]
    return float(np.mean(diff ** 2))


def batch_loss(preds: torch.Tensor, ys: torch.Tensor, include_query: bool = True) -> torch.Tensor:
    """
    Training objective on a batch, accumulated in float64.

    Args:
        preds: (B, T) predictions at every token position
        ys: (B, k+1) labels
    """
    at_x = preds[:, 0::2].double()
    target = ys.double()
    if not include_query:
        at_x, target = at_x[:, :-1], target[:, :-1]
    return ((at_x - target) ** 2).mean()


def transformer_traces(
    model: RegressionTransformer,
    prompts: Sequence[Prompt],
    model_id: str,
    batch_size: int = 128,
) -> list[PredictionTrace]:
    """Score a transformer on prompts with the shared trace protocol."""
    traces = []
    for start in range(0, len(prompts), batch_size):
        chunk = prompts[start: start + batch_size]
        tokens = tokenize_arrays(np.stack([p.xs for p in chunk]), np.stack([p.ys for p in chunk]))
        preds, _ = forward_batch(model, tokens)
        traces.extend(make_trace(p, pred, model_id) for p, pred in zip(chunk, preds))
    return traces
