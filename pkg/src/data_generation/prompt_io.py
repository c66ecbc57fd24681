"""
Prompt batch storage.

Binary layout: ``<name>.bin`` holds, for each prompt in order, xs
((k+1) x d, row-major), ys (k+1), w (d) and noise (k+1) as little-endian
64-bit floats. ``<name>.json`` is the sidecar with the shapes, seeds and
per-prompt metadata needed to read it back. CSV export is long-format,
one row per prompt position, for inspection.
"""

from pathlib import Path
from typing import Optional
import json
import logging

import numpy as np
import pandas as pd

from src.data_generation.prompts import Prompt

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_DTYPE = "<f8"


class PromptLoader:
    """
    Saves and loads prompt batches under one directory.

    Example:
        >>> loader = PromptLoader(Path("output/prompts"))
        >>> loader.save(prompts, "d_parallel_eval")
        >>> again = loader.load("d_parallel_eval")
    """

    def __init__(self, directory: Optional[Path] = None):
        self.directory = Path(directory or "output/prompts")

    def _paths(self, name: str) -> tuple[Path, Path]:
        return self.directory / f"{name}.bin", self.directory / f"{name}.json"

    def save(self, prompts: list[Prompt], name: str) -> tuple[Path, Path]:
        """Write the binary payload and its JSON sidecar."""
        if not prompts:
            raise ValueError("Cannot save an empty prompt batch")
        k, d = prompts[0].k, prompts[0].d
        if any(p.k != k or p.d != d for p in prompts):
            raise ValueError("All prompts in a batch must share k and d")

        self.directory.mkdir(parents=True, exist_ok=True)
        bin_path, json_path = self._paths(name)

        payload = np.concatenate([
            np.concatenate([p.xs.ravel(), p.ys, p.w, p.noise]) for p in prompts
        ]).astype(FLOAT_DTYPE)
        bin_path.write_bytes(payload.tobytes())

        sidecar = {
            "schema_version": SCHEMA_VERSION,
            "dtype": FLOAT_DTYPE,
            "count": len(prompts),
            "k": k,
            "d": d,
            "layout": ["xs", "ys", "w", "noise"],
            "seeds": [p.seed for p in prompts],
            "meta": [p.meta for p in prompts],
        }
        json_path.write_text(json.dumps(sidecar, indent=2, default=float))
        logger.info("Saved %d prompts to %s", len(prompts), bin_path)
        return bin_path, json_path

    def load(self, name: str) -> list[Prompt]:
        """Read a batch written by ``save``."""
        bin_path, json_path = self._paths(name)
        if not json_path.exists() or not bin_path.exists():
            raise FileNotFoundError(f"No prompt batch named {name} in {self.directory}")

        sidecar = json.loads(json_path.read_text())
        if sidecar.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"Unsupported prompt schema version: {sidecar.get('schema_version')}")

        k, d, count = sidecar["k"], sidecar["d"], sidecar["count"]
        stride = (k + 1) * d + (k + 1) + d + (k + 1)
        data = np.frombuffer(bin_path.read_bytes(), dtype=sidecar["dtype"]).astype(np.float64)
        if data.size != stride * count:
            raise ValueError(f"{bin_path} holds {data.size} floats, expected {stride * count}")

        prompts = []
        for i, row in enumerate(data.reshape(count, stride)):
            xs_end = (k + 1) * d
            xs = row[:xs_end].reshape(k + 1, d).copy()
            ys = row[xs_end: xs_end + k + 1].copy()
            w = row[xs_end + k + 1: xs_end + k + 1 + d].copy()
            noise = row[xs_end + k + 1 + d:].copy()
            prompts.append(Prompt(xs=xs, ys=ys, w=w, noise=noise, meta=dict(sidecar["meta"][i])))
        return prompts

    @staticmethod
    def to_dataframe(prompts: list[Prompt]) -> pd.DataFrame:
        """Long-format table: one row per (prompt, position)."""
        rows = []
        for index, prompt in enumerate(prompts):
            targets = prompt.targets
            for position in range(prompt.k + 1):
                row = {
                    "prompt_index": index,
                    "prompt_seed": prompt.seed,
                    "distribution": prompt.meta.get("name"),
                    "position": position + 1,
                    "is_query": position == prompt.k,
                }
                row.update({f"x_{j}": prompt.xs[position, j] for j in range(prompt.d)})
                row["y"] = prompt.ys[position]
                row["target"] = targets[position]
                rows.append(row)
        return pd.DataFrame(rows)

    def export_csv(self, prompts: list[Prompt], name: str) -> Path:
        """Write the long-format table to ``<name>.csv``."""
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"{name}.csv"
        self.to_dataframe(prompts).to_csv(path, index=False)
        return path
