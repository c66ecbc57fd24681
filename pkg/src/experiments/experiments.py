"""
The registered experiments.

Each ``exp_*`` function takes an ExperimentContext, writes its CSV, JSON
and SVG artifacts into ``ctx.out_dir`` and returns an ExperimentResult
listing them with a short summary.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
import json
import logging

import numpy as np
import pandas as pd

from src.analysis.ooddetect import detector_table, detector_trial
from src.analysis.spectra import (
    canonical_basis,
    canonical_projection_report,
    collect,
    loss_signature_correlation,
    readout_alignment,
    signature_frame,
    signature_means,
    signatures,
    spectrum_stats,
)
from src.config import SourceTag
from src.data_generation.prompt_io import PromptLoader
from src.data_generation.prompts import Prompt, blend_input_prompt, blend_weight_prompt
from src.experiments.context import ExperimentContext
from src.linalg import gaussian_matrix
from src.models.baselines import evaluate_baseline, ols_projected_inputs_trace
from src.models.probes import implicit_weight
from src.models.trace import PredictionTrace, label_power, mean_squared_error, traces_to_frame
from src.models.transformer import transformer_traces
from src.visualization.charts import ChartGenerator

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
PLATEAU_FRACTION = 0.1


@dataclass
class ExperimentResult:
    """Artifacts written by one experiment and its headline numbers."""
    outputs: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


# =============================================================================
# HELPERS
# =============================================================================

def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_json(data: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=float))
    return path


def _traces(ctx: ExperimentContext, model_id: str, prompts: Sequence[Prompt]) -> list[PredictionTrace]:
    """Traces for a baseline name or a trained model name."""
    if model_id.startswith("t_"):
        return transformer_traces(ctx.model(model_id), prompts, model_id, batch_size=ctx.config.eval_batch)
    return evaluate_baseline(model_id, prompts, ctx.config.baselines, workers=ctx.config.parallel_eval)


def _curve(model_id: str, distribution: str, traces: Sequence[PredictionTrace], power: float) -> pd.DataFrame:
    mse = mean_squared_error(traces)
    return pd.DataFrame({
        "model_id": model_id,
        "distribution": distribution,
        "position": np.arange(1, len(mse) + 1),
        "mse": mse,
        "normalized_mse": mse / power,
        "diverged": sum(t.diverged for t in traces),
    })


def _mse_curves(
    ctx: ExperimentContext,
    models: Sequence[str],
    batches: dict[str, list[Prompt]],
) -> tuple[pd.DataFrame, dict[tuple[str, str], list[PredictionTrace]]]:
    frames, all_traces = [], {}
    for dist_name, prompts in batches.items():
        power = label_power(prompts)
        for model_id in models:
            traces = _traces(ctx, model_id, prompts)
            all_traces[(model_id, dist_name)] = traces
            frames.append(_curve(model_id, dist_name, traces, power))
    return pd.concat(frames, ignore_index=True), all_traces


def _trace_frame(all_traces: dict[tuple[str, str], list[PredictionTrace]]) -> pd.DataFrame:
    """Per-prompt traces of every (model, distribution) pair in long format."""
    frames = [
        traces_to_frame(traces).assign(distribution=dist_name)
        for (_, dist_name), traces in all_traces.items()
    ]
    frame = pd.concat(frames, ignore_index=True)
    return frame[["model_id", "distribution", "prompt_seed", "position", "prediction", "squared_error"]]


def _save_prompts(ctx: ExperimentContext, batches: dict[str, list[Prompt]]) -> list[Path]:
    """Write each evaluated batch to ``prompts/<name>.bin`` with its JSON sidecar."""
    loader = PromptLoader(ctx.out_dir / "prompts")
    paths = []
    for name, prompts in batches.items():
        paths.extend(loader.save(prompts, name))
    return paths


def _final_errors(curves: pd.DataFrame) -> dict:
    final = curves[curves["position"] == curves["position"].max()]
    return {
        f"{row.model_id}/{row.distribution}": {"mse": row.mse, "normalized_mse": row.normalized_mse}
        for row in final.itertuples()
    }


def _model_list(ctx: ExperimentContext, transformers: Sequence[str], baselines: Sequence[str] = ("ols", "ridge")) -> list[str]:
    extra = [b for b in ctx.config.extra_baselines if b not in baselines]
    return [*transformers, *baselines, *extra]


def _spectral_analysis(
    ctx: ExperimentContext,
    model_id: str,
    dist_keys: dict[SourceTag, str],
    prefix: str,
) -> tuple[list[Path], dict]:
    """Spectra and signature means of one model on several distributions."""
    model = ctx.model(model_id)
    charts = ChartGenerator(ctx.out_dir)
    id_key = dist_keys[SourceTag.TRAINING_SUBSPACE]
    pool = collect(model, ctx.prompts(ctx.distribution(id_key), "pool", ctx.config.detector.pool_size),
                   SourceTag.TRAINING_SUBSPACE)
    basis = canonical_basis(pool, ctx.config.detector.pool_size)

    spectra, sig_frames, mean_rows, summary = [], [], [], {}
    for source, key in dist_keys.items():
        batch = collect(model, ctx.prompts(ctx.distribution(key), "eval"), source)
        stats = spectrum_stats(batch)
        sigs = signatures(batch, basis, workers=ctx.config.parallel_eval)
        means, stds = signature_means(sigs)
        spectra.append(stats)
        sig_frames.append(signature_frame(sigs, source))
        mean_rows.append(pd.DataFrame({
            "source": source.value,
            "index": np.arange(1, len(means) + 1),
            "mean": means,
            "std": stds,
        }))
        summary[source.value] = {
            "sigma_mean": stats.mean[:3].tolist(),
            "sigma_std": stats.std[:3].tolist(),
            "c_mean": means[:2].tolist(),
            "c_std": stds[:2].tolist(),
            "degenerate_prompts": sum(bool(s.degenerate_indices) for s in sigs),
        }

    spectrum = pd.concat([s.to_frame() for s in spectra], ignore_index=True)
    sig_means = pd.concat(mean_rows, ignore_index=True)
    outputs = [
        write_csv(spectrum, ctx.out_dir / f"{prefix}spectrum.csv"),
        write_csv(sig_means, ctx.out_dir / f"{prefix}signature_means.csv"),
        write_csv(pd.concat(sig_frames, ignore_index=True), ctx.out_dir / f"{prefix}signatures.csv"),
        charts.plot_spectrum(spectra, f"{prefix}spectrum.svg", f"Singular-value spectra ({model_id})"),
        charts.plot_signature_means(sig_means, f"{prefix}signature_means.svg", f"Canonical alignment ({model_id})"),
    ]
    return outputs, summary


# =============================================================================
# EXPERIMENTS
# =============================================================================

def exp_input_restriction(ctx: ExperimentContext) -> ExperimentResult:
    """Error curves of T_parallel, T_full and baselines on restricted, orthogonal and full inputs."""
    batches = {
        key: ctx.prompts(ctx.distribution(key))
        for key in ("input_subspace", "input_orthogonal", "full")
    }
    curves, traces = _mse_curves(ctx, _model_list(ctx, ["t_parallel", "t_full"]), batches)

    outputs = [
        write_csv(curves, ctx.out_dir / "mse_curves.csv"),
        write_csv(_trace_frame(traces), ctx.out_dir / "traces.csv"),
        ChartGenerator(ctx.out_dir).plot_mse_curves(curves, "mse_curves.svg", "Input-restricted training"),
        *_save_prompts(ctx, batches),
    ]
    summary = {"final_position": _final_errors(curves)}
    outputs.append(write_json(summary, ctx.out_dir / "summary.json"))
    return ExperimentResult(outputs=outputs, summary=summary)


def exp_blend(ctx: ExperimentContext) -> ExperimentResult:
    """Final-position error as in-distribution inputs (or tasks) are blended with orthogonal ones."""
    config = ctx.config
    base = ctx.seed_base("blend")
    rows = []

    for variant, make, transformer in (
        ("input", blend_input_prompt, "t_parallel"),
        ("weight", blend_weight_prompt, "t_weight"),
    ):
        for t in config.blend_grid:
            prompts = [make(ctx.pair, t, base + i, config.k) for i in range(config.eval_batch)]
            power = label_power(prompts)
            per_model = {
                transformer: _traces(ctx, transformer, prompts),
                "ols": _traces(ctx, "ols", prompts),
            }
            if variant == "input":
                per_model["ols_projected"] = [ols_projected_inputs_trace(p, ctx.pair.p_a) for p in prompts]
            for model_id, traces in per_model.items():
                final = float(mean_squared_error(traces)[-1])
                rows.append({
                    "variant": variant,
                    "t": t,
                    "model_id": model_id,
                    "mse": final,
                    "normalized_mse": final / power,
                })

    sweep = pd.DataFrame(rows)
    charts = ChartGenerator(ctx.out_dir)
    outputs = [write_csv(sweep, ctx.out_dir / "blend.csv")]
    for variant in ("input", "weight"):
        outputs.append(charts.plot_sweep(
            sweep[sweep["variant"] == variant], "t", f"blend_{variant}.svg",
            f"Blending {variant}s toward the training subspace", "t",
        ))
    summary = {
        f"{row.variant}/{row.model_id}/t={row.t:g}": row.mse for row in sweep.itertuples()
    }
    outputs.append(write_json(summary, ctx.out_dir / "summary.json"))
    return ExperimentResult(outputs=outputs, summary=summary)


def exp_spectra(ctx: ExperimentContext) -> ExperimentResult:
    """Singular-value spectra and canonical alignment of T_parallel representations."""
    outputs, summary = _spectral_analysis(
        ctx,
        "t_parallel",
        {
            SourceTag.TRAINING_SUBSPACE: "input_subspace",
            SourceTag.ORTHOGONAL: "input_orthogonal",
            SourceTag.FULL: "full",
        },
        prefix="",
    )
    outputs.append(write_json(summary, ctx.out_dir / "summary.json"))
    return ExperimentResult(outputs=outputs, summary=summary)


def exp_ood_detector(ctx: ExperimentContext) -> ExperimentResult:
    """Gaussian confidence-region detector on (c_1, c_2) for T_parallel and T_full."""
    config = ctx.config
    det = config.detector
    d_parallel = ctx.distribution("input_subspace")
    d_perp = ctx.distribution("input_orthogonal")
    fit_prompts = ctx.prompts(d_parallel, "fit", 2 * det.fit_size)
    id_prompts = ctx.prompts(d_parallel, "heldout", 2 * det.eval_size)
    ood_prompts = ctx.prompts(d_perp, "heldout", 2 * det.eval_size)

    reports = []
    for model_id in ("t_parallel", "t_full"):
        model = ctx.model(model_id)
        pool = collect(model, ctx.prompts(d_parallel, "pool", det.pool_size), SourceTag.TRAINING_SUBSPACE)
        basis = canonical_basis(pool, det.pool_size)
        reports.append(detector_trial(
            model, basis, fit_prompts, id_prompts, ood_prompts, det, config.seed,
            model_id=model_id, workers=config.parallel_eval,
        ))

    table = detector_table(reports)
    summary = {
        r_id.model_id: {"in_distribution": r_id.to_dict(), "orthogonal": r_ood.to_dict()}
        for r_id, r_ood in reports
    }
    outputs = [
        write_csv(table, ctx.out_dir / "detector.csv"),
        write_json(summary, ctx.out_dir / "summary.json"),
    ]
    return ExperimentResult(outputs=outputs, summary=summary)


def exp_projection_tables(ctx: ExperimentContext) -> ExperimentResult:
    """Canonical-plane projection of representations and readout alignment."""
    det = ctx.config.detector
    projection_rows, alignment_rows, summary = [], [], {"projection": {}, "readout_alignment": {}}

    for model_id, key in (("t_parallel", "input_subspace"), ("t_full", "full")):
        model = ctx.model(model_id)
        dist = ctx.distribution(key)
        tag = ctx.source_tag(dist)
        basis = canonical_basis(collect(model, ctx.prompts(dist, "pool", det.pool_size), tag), det.pool_size)
        report = canonical_projection_report(collect(model, ctx.prompts(dist), tag), basis, model.readout_direction())
        projection_rows.append({
            "model_id": model_id,
            "norm_ratio": report.norm_ratio_mean,
            "prediction_mse": report.prediction_mse,
        })
        summary["projection"][model_id] = report.to_dict()

    model = ctx.model("t_parallel")
    f = model.readout_direction()
    for key in ("input_subspace", "input_orthogonal"):
        dist = ctx.distribution(key)
        report = readout_alignment(collect(model, ctx.prompts(dist), ctx.source_tag(dist)), f)
        alignment_rows.append({
            "source": report.source.value,
            "head_mean": report.head_mean,
            "head_std": report.head_std,
            "tail_mean": report.tail_mean,
            "tail_std": report.tail_std,
        })
        summary["readout_alignment"][report.source.value] = report.to_dict()

    outputs = [
        write_csv(pd.DataFrame(projection_rows), ctx.out_dir / "projection.csv"),
        write_csv(pd.DataFrame(alignment_rows), ctx.out_dir / "readout_alignment.csv"),
        write_json(summary, ctx.out_dir / "summary.json"),
    ]
    return ExperimentResult(outputs=outputs, summary=summary)


def exp_correlation(ctx: ExperimentContext) -> ExperimentResult:
    """Correlation between ||C_p,:2||^2 and per-prompt mean MSE over D_parallel and D_perp."""
    det = ctx.config.detector
    model = ctx.model("t_parallel")
    d_parallel = ctx.distribution("input_subspace")
    pool = collect(model, ctx.prompts(d_parallel, "pool", det.pool_size), SourceTag.TRAINING_SUBSPACE)
    basis = canonical_basis(pool, det.pool_size)

    groups = []
    for key in ("input_subspace", "input_orthogonal"):
        dist = ctx.distribution(key)
        tag = ctx.source_tag(dist)
        prompts = ctx.prompts(dist)
        sigs = signatures(collect(model, prompts, tag), basis, workers=ctx.config.parallel_eval)
        groups.append((sigs, _traces(ctx, "t_parallel", prompts), tag))

    corr = loss_signature_correlation(groups)
    summary = corr.to_dict()
    outputs = [
        write_csv(corr.pairs, ctx.out_dir / "correlation_pairs.csv"),
        write_json(summary, ctx.out_dir / "summary.json"),
        ChartGenerator(ctx.out_dir).plot_correlation(corr.pairs, corr.result),
    ]
    return ExperimentResult(outputs=outputs, summary=summary)


def exp_noise(ctx: ExperimentContext) -> ExperimentResult:
    """Models trained on noisy labels, tested on noiseless prompts."""
    ctx.require_noise()
    full_curves, _ = _mse_curves(
        ctx,
        _model_list(ctx, ["t_full_noisy", "t_full"]),
        {"full": ctx.prompts(ctx.distribution("full"))},
    )
    restricted_curves, _ = _mse_curves(
        ctx,
        _model_list(ctx, ["t_parallel_noisy", "t_parallel"]),
        {key: ctx.prompts(ctx.distribution(key)) for key in ("input_subspace", "input_orthogonal")},
    )
    curves = pd.concat([full_curves, restricted_curves], ignore_index=True)

    outputs = [
        write_csv(curves, ctx.out_dir / "mse_curves.csv"),
        ChartGenerator(ctx.out_dir).plot_mse_curves(curves, "mse_curves.svg", "Training with label noise"),
    ]
    summary = {"noise_sigma": ctx.config.noise_sigma, "final_position": _final_errors(curves)}
    outputs.append(write_json(summary, ctx.out_dir / "summary.json"))
    return ExperimentResult(outputs=outputs, summary=summary)


def exp_scaling(ctx: ExperimentContext) -> ExperimentResult:
    """Final-position error as inputs are scaled by s."""
    models = _model_list(ctx, ["t_full", "t_full_multiscale"])
    full = ctx.distribution("full")
    rows = []
    for scale in ctx.config.scales:
        prompts = ctx.prompts(full.with_scale(scale), "scale")
        power = label_power(prompts)
        for model_id in models:
            final = float(mean_squared_error(_traces(ctx, model_id, prompts))[-1])
            rows.append({"scale": scale, "model_id": model_id, "mse": final, "normalized_mse": final / power})

    sweep = pd.DataFrame(rows)
    outputs = [
        write_csv(sweep, ctx.out_dir / "scaling.csv"),
        ChartGenerator(ctx.out_dir).plot_sweep(
            sweep, "scale", "scaling.svg", "Input scaling", "Input scale s", log_x=True,
        ),
    ]
    summary = {
        "train_scales": list(ctx.config.train_scales),
        "final_position": {f"{row.model_id}/s={row.scale:g}": row.mse for row in sweep.itertuples()},
    }
    outputs.append(write_json(summary, ctx.out_dir / "summary.json"))
    return ExperimentResult(outputs=outputs, summary=summary)


def exp_implicit_weights(ctx: ExperimentContext) -> ExperimentResult:
    """Norms of the implicit weight of the weight-restricted model inside A and B."""
    config = ctx.config
    model = ctx.model("t_weight")
    prompts = ctx.prompts(ctx.distribution("weight_subspace"), "implicit", config.implicit_prompts)
    queries = gaussian_matrix(config.query_count, config.d, np.random.SeedSequence([config.seed, 1]))

    rows = []
    for prompt in prompts:
        estimate = implicit_weight(model, prompt, queries)
        norm_a, norm_b = estimate.projected_norms(ctx.pair.p_a, ctx.pair.p_b)
        rows.append({
            "prompt_seed": prompt.seed,
            "norm_training_subspace": norm_a,
            "norm_orthogonal": norm_b,
            "task_error": float(np.linalg.norm(estimate.beta - prompt.w)),
            "rank_deficient": estimate.rank_deficient,
        })

    frame = pd.DataFrame(rows)
    summary = {
        "training_subspace": {
            "mean_norm": float(frame["norm_training_subspace"].mean()),
            "var_norm": float(frame["norm_training_subspace"].var(ddof=0)),
        },
        "orthogonal": {
            "mean_norm": float(frame["norm_orthogonal"].mean()),
            "var_norm": float(frame["norm_orthogonal"].var(ddof=0)),
        },
        "queries": config.query_count,
        "rank_deficient": int(frame["rank_deficient"].sum()),
    }
    outputs = [
        write_csv(frame, ctx.out_dir / "implicit_weights.csv"),
        write_json(summary, ctx.out_dir / "summary.json"),
    ]
    return ExperimentResult(outputs=outputs, summary=summary)


def plateau_examples(curve: np.ndarray, fraction: float = PLATEAU_FRACTION) -> int:
    """
    In-context examples needed before the error first drops under
    ``fraction`` of its zero-context value; len(curve) if it never does.
    """
    below = np.nonzero(curve < fraction * curve[0])[0]
    return int(below[0]) if below.size else len(curve)


def exp_vary_dim(ctx: ExperimentContext) -> ExperimentResult:
    """Weight-restricted models trained at several subspace dimensions q."""
    frames, plateau = [], {}
    full = ctx.prompts(ctx.distribution("full"))
    for q in ctx.config.vary_dims:
        model_id = "t_weight" if q == ctx.config.q else f"t_weight_q{q}"
        id_name = f"weight_subspace_q{q}"
        curves, _ = _mse_curves(
            ctx,
            _model_list(ctx, [model_id]),
            {id_name: ctx.prompts(ctx.distribution("weight_subspace", q=q)), "full": full},
        )
        curves["q"] = q
        frames.append(curves)
        id_curve = curves[(curves["model_id"] == model_id) & (curves["distribution"] == id_name)]
        plateau[str(q)] = {
            "q": q,
            "plateau_examples": plateau_examples(id_curve["mse"].to_numpy()),
            "final_mse_in_distribution": float(id_curve["mse"].iloc[-1]),
        }

    curves = pd.concat(frames, ignore_index=True)
    # baselines on the shared full-space batch repeat once per q
    plotted = curves.drop_duplicates(["model_id", "distribution", "position"])
    outputs = [
        write_csv(curves, ctx.out_dir / "mse_curves.csv"),
        ChartGenerator(ctx.out_dir).plot_mse_curves(plotted, "mse_curves.svg", "Varying subspace dimension"),
    ]
    summary = {"plateau": plateau}
    outputs.append(write_json(summary, ctx.out_dir / "summary.json"))
    return ExperimentResult(outputs=outputs, summary=summary)


def exp_weight_restriction(ctx: ExperimentContext) -> ExperimentResult:
    """Weight-space analogue of input restriction, with its spectral signature figures."""
    batches = {
        key: ctx.prompts(ctx.distribution(key))
        for key in ("weight_subspace", "weight_orthogonal", "full")
    }
    curves, traces = _mse_curves(ctx, _model_list(ctx, ["t_weight", "t_full"]), batches)
    outputs = [
        write_csv(curves, ctx.out_dir / "mse_curves.csv"),
        write_csv(_trace_frame(traces), ctx.out_dir / "traces.csv"),
        *_save_prompts(ctx, batches),
        ChartGenerator(ctx.out_dir).plot_mse_curves(curves, "mse_curves.svg", "Weight-restricted training"),
    ]

    spectral_outputs, spectral = _spectral_analysis(
        ctx,
        "t_weight",
        {
            SourceTag.TRAINING_SUBSPACE: "weight_subspace",
            SourceTag.ORTHOGONAL: "weight_orthogonal",
            SourceTag.FULL: "full",
        },
        prefix="weight_",
    )
    outputs.extend(spectral_outputs)
    summary = {"final_position": _final_errors(curves), "spectra": spectral}
    outputs.append(write_json(summary, ctx.out_dir / "summary.json"))
    return ExperimentResult(outputs=outputs, summary=summary)
