"""
Checkpoint storage for trained transformers.

A checkpoint is two files sharing a stem:

- ``<stem>.json``: header with the schema version, model config, training
  step, seeds, and the name, shape and offset of every stored array.
- ``<stem>.bin``: the arrays back to back as little-endian 32-bit floats,
  in header order.

Optimizer moments are stored alongside the parameters under an
``optimizer.`` prefix so an interrupted run can resume exactly.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional
import json
import logging
import os

import numpy as np
import torch

from src.config import ModelConfig
from src.errors import MissingCheckpointError
from src.models.transformer import RegressionTransformer, build_model

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TENSOR_DTYPE = "<f4"


@dataclass
class CheckpointState:
    """Everything in a checkpoint header besides the arrays."""
    model_config: ModelConfig
    step: int
    seeds: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def checkpoint_paths(stem: Path) -> tuple[Path, Path]:
    stem = Path(stem)
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".bin")


def checkpoint_exists(stem: Path) -> bool:
    header, payload = checkpoint_paths(stem)
    return header.exists() and payload.exists()


def _optimizer_arrays(model: RegressionTransformer, optimizer: torch.optim.Optimizer) -> tuple[dict, dict]:
    arrays, steps = {}, {}
    for name, param in model.named_parameters():
        state = optimizer.state.get(param)
        if not state:
            continue
        arrays[f"optimizer.{name}.exp_avg"] = state["exp_avg"]
        arrays[f"optimizer.{name}.exp_avg_sq"] = state["exp_avg_sq"]
        steps[name] = float(state["step"])
    return arrays, steps


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_checkpoint(
    stem: Path,
    model: RegressionTransformer,
    step: int,
    seeds: Optional[dict] = None,
    optimizer: Optional[torch.optim.Optimizer] = None,
    extra: Optional[dict] = None,
) -> Path:
    """
    Write a checkpoint for ``model`` (and optionally its optimizer).

    Args:
        stem: Path without extension, e.g. ``output/checkpoints/t_parallel``
        model: Model to store
        step: Number of completed training steps
        seeds: Seeds used for initialization and sampling
        optimizer: AdamW optimizer whose moments should be stored
        extra: Additional JSON-serializable metadata

    Returns:
        Path of the JSON header
    """
    header_path, payload_path = checkpoint_paths(stem)
    header_path.parent.mkdir(parents=True, exist_ok=True)

    arrays = {name: tensor for name, tensor in model.state_dict().items()}
    optimizer_steps = {}
    if optimizer is not None:
        moments, optimizer_steps = _optimizer_arrays(model, optimizer)
        arrays.update(moments)

    entries, chunks, offset = [], [], 0
    for name, tensor in arrays.items():
        data = tensor.detach().cpu().numpy().astype(TENSOR_DTYPE)
        entries.append({"name": name, "shape": list(data.shape), "offset": offset, "count": int(data.size)})
        chunks.append(data.tobytes())
        offset += data.size

    header = {
        "schema_version": SCHEMA_VERSION,
        "dtype": TENSOR_DTYPE,
        "model_config": asdict(model.config),
        "step": step,
        "seeds": seeds or {},
        "optimizer_steps": optimizer_steps,
        "extra": extra or {},
        "tensors": entries,
    }

    _atomic_write(payload_path, b"".join(chunks))
    _atomic_write(header_path, json.dumps(header, indent=2).encode())
    logger.info("Saved checkpoint at step %d to %s", step, header_path)
    return header_path


def load_checkpoint(
    stem: Path,
    optimizer_factory=None,
) -> tuple[RegressionTransformer, CheckpointState, Optional[torch.optim.Optimizer]]:
    """
    Rebuild a model (and optionally its optimizer) from a checkpoint.

    Args:
        stem: Path without extension
        optimizer_factory: Callable taking the model and returning a fresh
            optimizer; when given, stored moments are loaded into it

    Returns:
        (model, state, optimizer or None)
    """
    header_path, payload_path = checkpoint_paths(stem)
    if not checkpoint_exists(stem):
        raise MissingCheckpointError(f"No checkpoint at {header_path}")

    header = json.loads(header_path.read_text())
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"Unsupported checkpoint schema version: {header.get('schema_version')}")

    flat = np.frombuffer(payload_path.read_bytes(), dtype=header["dtype"])
    arrays = {}
    for entry in header["tensors"]:
        chunk = flat[entry["offset"]: entry["offset"] + entry["count"]]
        if chunk.size != entry["count"]:
            raise ValueError(f"Checkpoint payload {payload_path} is truncated at {entry['name']}")
        arrays[entry["name"]] = torch.from_numpy(chunk.reshape(entry["shape"]).copy())

    config = ModelConfig(**header["model_config"])
    model = build_model(config)
    model.load_state_dict({k: v for k, v in arrays.items() if not k.startswith("optimizer.")})

    optimizer = None
    if optimizer_factory is not None:
        optimizer = optimizer_factory(model)
        for name, param in model.named_parameters():
            if name not in header["optimizer_steps"]:
                continue
            optimizer.state[param] = {
                "step": torch.tensor(header["optimizer_steps"][name], dtype=torch.float32),
                "exp_avg": arrays[f"optimizer.{name}.exp_avg"],
                "exp_avg_sq": arrays[f"optimizer.{name}.exp_avg_sq"],
            }

    state = CheckpointState(
        model_config=config,
        step=header["step"],
        seeds=header.get("seeds", {}),
        extra=header.get("extra", {}),
    )
    logger.info("Loaded checkpoint at step %d from %s", state.step, header_path)
    return model, state, optimizer
