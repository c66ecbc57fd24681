"""
Command-line entry point.

    icl-spectra <experiment-id> [--config PATH] [--preset desk|large]
                [--train-first] [--seed N] [--out DIR] [--parallel-eval N]
    icl-spectra --list
"""

from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence
import argparse
import json
import logging
import sys

from src.config import Preset, build_config
from src.errors import ConfigError, ManifestError, MissingCheckpointError, TrainingDivergedError
from src.experiments.registry import EXPERIMENTS, run_experiment

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icl-spectra",
        description="Reproducible in-context regression experiments.",
        epilog="experiments:\n" + "\n".join(
            f"  {entry.experiment_id:<20} {entry.artifact}" for entry in EXPERIMENTS.values()
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("experiment_id", nargs="?", choices=list(EXPERIMENTS), help="Experiment to run")
    parser.add_argument("--config", type=Path, help="Flat key = value config file")
    parser.add_argument(
        "--preset", default=Preset.DESK.value, choices=[p.value for p in Preset],
        help="Base configuration (default: desk)",
    )
    parser.add_argument("--train-first", action="store_true", help="Train missing models before evaluating")
    parser.add_argument("--seed", type=int, help="Run seed for evaluation prompts")
    parser.add_argument("--out", type=Path, help="Output root (default: $ICL_SPECTRA_OUTPUT or ./output)")
    parser.add_argument("--parallel-eval", type=int, help="Threads for per-prompt evaluation")
    parser.add_argument("--list", action="store_true", help="List experiments and exit")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings only")
    return parser


def print_experiments() -> None:
    print("=" * 70)
    print("REGISTERED EXPERIMENTS")
    print("=" * 70)
    for entry in EXPERIMENTS.values():
        print(f"  {entry.experiment_id:<20} {entry.artifact}")
        print(f"  {'':<20} {entry.description}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI; returns a process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.list:
        print_experiments()
        return 0
    if args.experiment_id is None:
        parser.error("an experiment id is required (see --list)")

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    if args.parallel_eval is not None:
        overrides["parallel_eval"] = str(args.parallel_eval)

    try:
        config = build_config(args.preset, args.config, overrides)
        config = replace(
            config,
            experiment_id=args.experiment_id,
            train_first=args.train_first or config.train_first,
        )
        result, manifest = run_experiment(config)
    except (ConfigError, MissingCheckpointError, ManifestError) as e:
        logger.error("%s", e)
        return 2
    except TrainingDivergedError as e:
        logger.error("Training diverged at step %d (loss %s)", e.step, e.loss)
        return 3

    print("=" * 70)
    print(f"{args.experiment_id.upper()} COMPLETE ({manifest.wall_clock_seconds:.1f}s)")
    print("=" * 70)
    for path in result.outputs:
        print(f"  {path}")
    print()
    print(json.dumps(result.summary, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
