"""Shared fixtures for the test suite."""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import build_config
from src.data_generation.subspaces import make_subspace_pair

SMOKE_CONFIG = Path(__file__).parent.parent / "configs" / "smoke.cfg"
SLOW_ENV_VAR = "ICL_SPECTRA_SLOW"


def pytest_configure(config):
    config.addinivalue_line("markers", f"slow: desk-scale training runs, enabled with {SLOW_ENV_VAR}=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get(SLOW_ENV_VAR) == "1":
        return
    skip = pytest.mark.skip(reason=f"set {SLOW_ENV_VAR}=1 to run desk-scale training")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def pair():
    """d=8, q=4 subspace pair."""
    return make_subspace_pair(8, 4, seed=0)


@pytest.fixture
def smoke_config(tmp_path):
    """Smoke-scale config writing into a temporary directory."""
    return build_config("desk", SMOKE_CONFIG, {"output_dir": str(tmp_path)})
