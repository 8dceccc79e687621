"""Command-line entry point: one config file, one command per stage.

Exit codes are fixed for scripting: 0 success, 2 configuration error,
3 missing or stale upstream artifact, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, pipeline
from .config import PipelineConfig, load_pipeline_config
from .errors import (
    CollectionRankError,
    ConfigError,
    MissingArtifactError,
    StaleArtifactError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ARTIFACT = 3
EXIT_RUNTIME = 4

DEFAULT_CONFIG = "configs/default.yaml"

COMMANDS = {
    "generate": pipeline.cmd_generate,
    "build-dataset": pipeline.cmd_build_dataset,
    "train": pipeline.cmd_train,
    "eval": pipeline.cmd_eval,
    "abtest": pipeline.cmd_abtest,
    "ladder": pipeline.cmd_ladder,
}

_HELP = {
    "generate": "generate the synthetic world, embeddings and session logs",
    "build-dataset": "build labeled train/test pairs from the session logs",
    "train": "fit the monotonic booster on the training pairs",
    "eval": "report pairwise accuracy on the unbiased holdout",
    "abtest": "run the simulated A/B test against the popularity incumbent",
    "ladder": "run the seed-averaged ablation ladder experiment",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collectionrank",
        description="Curated-collection ranking pipeline on a synthetic marketplace.",
    )
    parser.add_argument(
        "--version", action="version", version=f"collectionrank {__version__}"
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument(
            "--config",
            default=DEFAULT_CONFIG,
            metavar="PATH",
            help=f"pipeline config file (default: {DEFAULT_CONFIG})",
        )
        p.add_argument(
            "--seed", type=int, default=None, help="override the config's seed"
        )
        p.add_argument(
            "--out",
            default=None,
            metavar="DIR",
            help="override the config's artifacts directory",
        )
        p.add_argument(
            "--force",
            action="store_true",
            help="run even if upstream artifacts look stale",
        )
        p.add_argument(
            "--quiet", action="store_true", help="suppress progress output"
        )
    return parser


def _load_config(args) -> PipelineConfig:
    config = load_pipeline_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        config.seed = args.seed
    if args.out is not None:
        config.artifacts_dir = args.out
    return config


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        config = _load_config(args)
        COMMANDS[args.command](config, force=args.force, quiet=args.quiet)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, StaleArtifactError) as e:
        print(f"artifact error: {e}", file=sys.stderr)
        return EXIT_ARTIFACT
    except CollectionRankError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
