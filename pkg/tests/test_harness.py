"""Tests for configuration, the experiment registry, manifests and the CLI."""

from dataclasses import replace
import json

import numpy as np
import pandas as pd
import pytest

from src.config import (
    CONFIG_DIR,
    Preset,
    apply_overrides,
    build_config,
    get_preset,
    read_config_file,
)
from src.data_generation.prompt_io import PromptLoader
from src.errors import ConfigError, ManifestError
from src.experiments import cli
from src.experiments.context import ExperimentContext
from src.experiments.experiments import plateau_examples
from src.experiments.manifest import MANIFEST_NAME, RunManifest, file_checksum, verify_run
from src.experiments.registry import EXPERIMENTS, get_experiment, run_experiment

SMOKE_CONFIG = CONFIG_DIR / "smoke.cfg"


class TestConfig:
    def test_presets(self):
        desk, large = get_preset("desk"), get_preset("large")
        assert (desk.d, desk.q, desk.k) == (8, 4, 16)
        assert (large.d, large.q, large.k) == (20, 10, 40)
        assert large.model.layers == 12 and large.model.heads == 8 and large.model.hidden == 256
        assert large.train.curriculum.d_start_init == 15
        assert large.preset == Preset.LARGE

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="Valid presets"):
            get_preset("huge")

    def test_smoke_file(self, smoke_config):
        assert (smoke_config.d, smoke_config.q, smoke_config.k) == (4, 2, 8)
        assert smoke_config.train.steps == 20
        assert smoke_config.blend_grid == (0.0, 0.5, 1.0)
        assert smoke_config.detector.pool_size == 4

    def test_synchronized_model_shape(self, smoke_config):
        assert smoke_config.model.token_dim == smoke_config.d
        assert smoke_config.model.max_positions >= 2 * smoke_config.k + 1
        assert smoke_config.train.curriculum.k_end == smoke_config.k

    def test_overrides_take_precedence(self, tmp_path):
        config = build_config("desk", SMOKE_CONFIG, {"steps": "7", "output_dir": str(tmp_path)})
        assert config.train.steps == 7

    def test_unknown_key_in_file(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("d = 4\nwarp_factor = 9\n")
        with pytest.raises(ConfigError, match="unknown key"):
            read_config_file(path)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("d 4\n")
        with pytest.raises(ConfigError):
            read_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            read_config_file(tmp_path / "nope.cfg")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="Bad value"):
            apply_overrides(get_preset("desk"), {"steps": "many"})

    def test_subspace_dimension_checked(self):
        with pytest.raises(ConfigError):
            apply_overrides(get_preset("desk"), {"q": "8"})

    def test_noise_is_optional(self):
        config = apply_overrides(get_preset("desk"), {"noise_sigma": "none"})
        assert config.noise_sigma is None

    def test_snapshot_is_json(self, smoke_config):
        snapshot = smoke_config.to_dict()
        assert json.loads(json.dumps(snapshot))["model"]["hidden"] == 16
        assert snapshot["preset"] == "desk"


class TestRegistry:
    def test_ids(self):
        assert set(EXPERIMENTS) == {
            "input_restriction", "blend", "spectra", "ood_detector", "projection_tables",
            "correlation", "noise", "scaling", "implicit_weights", "vary_dim", "weight_restriction",
        }

    def test_unknown(self):
        with pytest.raises(ConfigError, match="Valid experiments"):
            get_experiment("telepathy")

    def test_each_id_names_one_artifact(self):
        artifacts = [entry.artifact for entry in EXPERIMENTS.values()]
        assert len(set(artifacts)) == len(artifacts)
        for artifact in artifacts:
            kind, _, title = artifact.partition(": ")
            assert kind in ("Figure", "Table")
            assert title


class TestContext:
    def test_seed_blocks_disjoint(self, smoke_config):
        ctx = ExperimentContext(smoke_config)
        dist = ctx.distribution("full")
        eval_seeds = {p.seed for p in ctx.prompts(dist, "eval")}
        fit_seeds = {p.seed for p in ctx.prompts(dist, "fit")}
        assert not eval_seeds & fit_seeds

    def test_prompts_reproducible(self, smoke_config):
        a = ExperimentContext(smoke_config).prompts(ExperimentContext(smoke_config).distribution("input_subspace"))
        b = ExperimentContext(smoke_config).prompts(ExperimentContext(smoke_config).distribution("input_subspace"))
        np.testing.assert_array_equal(a[0].xs, b[0].xs)

    def test_unknown_distribution(self, smoke_config):
        with pytest.raises(ValueError, match="Valid keys"):
            ExperimentContext(smoke_config).distribution("diagonal")

    def test_missing_noise(self, smoke_config):
        ctx = ExperimentContext(replace(smoke_config, noise_sigma=None, experiment_id="noise"))
        with pytest.raises(ConfigError, match="noise_sigma"):
            ctx.training_distribution("t_full_noisy")

    def test_weight_model_for_other_q(self, smoke_config):
        dist = ExperimentContext(smoke_config).training_distribution("t_weight_q1")
        assert dist.p_w is not None
        assert np.linalg.matrix_rank(dist.p_w) == 1


class TestManifest:
    def _run_dir(self, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        (out / "a.csv").write_text("x\n1\n")
        manifest = RunManifest.build("demo", {"seed": 0}, out, [out / "a.csv"], 1.23)
        manifest.write(out)
        return out

    def test_verify(self, tmp_path):
        out = self._run_dir(tmp_path)
        manifest = verify_run(out)
        assert manifest.checksums["a.csv"] == file_checksum(out / "a.csv")
        assert not (out / (MANIFEST_NAME + ".tmp")).exists()

    def test_tampered_output(self, tmp_path):
        out = self._run_dir(tmp_path)
        (out / "a.csv").write_text("x\n2\n")
        with pytest.raises(ManifestError, match="mismatch"):
            verify_run(out)

    def test_deleted_output(self, tmp_path):
        out = self._run_dir(tmp_path)
        (out / "a.csv").unlink()
        with pytest.raises(ManifestError, match="missing"):
            verify_run(out)

    def test_no_manifest(self, tmp_path):
        with pytest.raises(ManifestError):
            verify_run(tmp_path)


def test_plateau_examples():
    curve = np.array([1.0, 0.8, 0.5, 0.2, 0.05, 0.01])
    assert plateau_examples(curve) == 4
    assert plateau_examples(np.ones(5)) == 5


class TestCli:
    def test_list(self, capsys):
        assert cli.main(["--list"]) == 0
        out = capsys.readouterr().out
        for entry in EXPERIMENTS.values():
            assert entry.experiment_id in out
            assert entry.artifact in out

    def test_help_maps_ids_to_artifacts(self):
        text = cli.build_parser().format_help()
        for entry in EXPERIMENTS.values():
            assert f"{entry.experiment_id:<20} {entry.artifact}" in text

    def test_unknown_experiment(self):
        with pytest.raises(SystemExit):
            cli.main(["telepathy"])

    def test_missing_checkpoint(self, tmp_path):
        code = cli.main(["spectra", "--config", str(SMOKE_CONFIG), "--out", str(tmp_path), "-q"])
        assert code == 2
        assert not (tmp_path / "spectra" / MANIFEST_NAME).exists()

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("steps = -\n")
        assert cli.main(["spectra", "--config", str(path), "-q"]) == 2


# =============================================================================
# End-to-end runs at smoke scale
# =============================================================================

@pytest.fixture(scope="module")
def smoke_root(tmp_path_factory):
    """Shared output root so models trained by one experiment are reused by the next."""
    return tmp_path_factory.mktemp("smoke")


def _smoke(root, experiment_id, **changes):
    config = build_config("desk", SMOKE_CONFIG, {"output_dir": str(root)})
    return replace(config, experiment_id=experiment_id, train_first=True, **changes)


class TestSmokeRuns:
    @pytest.mark.parametrize("experiment_id", list(EXPERIMENTS))
    def test_runs_and_verifies(self, smoke_root, experiment_id):
        result, manifest = run_experiment(_smoke(smoke_root, experiment_id))
        out = smoke_root / experiment_id
        assert result.outputs
        assert all(path.exists() for path in result.outputs)
        assert (out / "summary.json").exists()
        assert verify_run(out).checksums == manifest.checksums
        assert manifest.config["experiment_id"] == experiment_id

    def test_checkpoints_written(self, smoke_root):
        run_experiment(_smoke(smoke_root, "input_restriction"))
        checkpoints = smoke_root / "checkpoints"
        assert (checkpoints / "t_parallel.json").exists()
        assert (checkpoints / "t_full.json").exists()

    def test_rerun_is_byte_identical(self, smoke_root):
        _, first = run_experiment(_smoke(smoke_root, "input_restriction"))
        _, second = run_experiment(_smoke(smoke_root, "input_restriction"))
        assert first.checksums == second.checksums

    def test_trained_models_load_without_training(self, smoke_root):
        run_experiment(_smoke(smoke_root, "input_restriction"))
        config = replace(_smoke(smoke_root, "input_restriction"), train_first=False)
        result, _ = run_experiment(config)
        assert result.summary

    def test_noise_requires_sigma(self, smoke_root):
        with pytest.raises(ConfigError):
            run_experiment(_smoke(smoke_root, "noise", noise_sigma=None))

    def test_summary_contents(self, smoke_root):
        result, _ = run_experiment(_smoke(smoke_root, "vary_dim"))
        assert set(result.summary["plateau"]) == {"1", "2"}
        result, _ = run_experiment(_smoke(smoke_root, "implicit_weights"))
        assert result.summary["queries"] == 8

    def test_vary_dim_includes_ridge(self, smoke_root):
        run_experiment(_smoke(smoke_root, "vary_dim"))
        curves = pd.read_csv(smoke_root / "vary_dim" / "mse_curves.csv")
        assert {"ols", "ridge"} <= set(curves["model_id"])

    def test_traces_and_prompts_written(self, smoke_root):
        config = _smoke(smoke_root, "input_restriction")
        _, manifest = run_experiment(config)
        out = smoke_root / "input_restriction"

        traces = pd.read_csv(out / "traces.csv")
        curves = pd.read_csv(out / "mse_curves.csv")
        assert len(traces) == config.eval_batch * len(curves)
        per_position = traces.groupby(["model_id", "distribution", "position"])["squared_error"].mean()
        row = curves.iloc[0]
        assert per_position[(row.model_id, row.distribution, row.position)] == pytest.approx(row.mse, rel=1e-9)

        for name in ("input_subspace", "input_orthogonal", "full"):
            assert f"prompts/{name}.bin" in manifest.checksums
            assert f"prompts/{name}.json" in manifest.checksums

        ctx = ExperimentContext(config)
        expected = ctx.prompts(ctx.distribution("input_subspace"))
        loaded = PromptLoader(out / "prompts").load("input_subspace")
        assert [p.seed for p in loaded] == [p.seed for p in expected]
        np.testing.assert_array_equal(loaded[0].xs, expected[0].xs)
        np.testing.assert_array_equal(loaded[-1].ys, expected[-1].ys)
