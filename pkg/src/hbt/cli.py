"""
Command-line front end.

    python -m src.hbt.cli run --experiment g2-fixed --seed 7 --out out/
    python -m src.hbt.cli plot out/g2-counter.csv

Exit codes: 0 success, 2 invalid configuration or input, 3 I/O failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from src.api.config import settings
from src.hbt.apparatus import ApparatusConfig, load_config, with_updates
from src.hbt.exceptions import ConfigurationError, HbtError
from src.hbt.experiments import RunOptions, run_experiment
from src.hbt.plotting import write_plot_files
from src.hbt.rng import fresh_seed
from src.hbt.schemas import Experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermal-hbt",
        description="Simulate two-photon interference of thermal light through a grating",
    )
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a named experiment")
    run.add_argument(
        "--experiment",
        choices=[e.value for e in Experiment],
        default=settings.EXPERIMENT,
    )
    run.add_argument("--config", default=settings.CONFIG_PATH, help="KEY=VALUE apparatus file")
    run.add_argument("--seed", type=int, default=settings.SEED)
    run.add_argument("--out", default=settings.OUT_DIR, help="Output directory")
    run.add_argument("--ensemble", type=int, default=settings.ENSEMBLE)
    run.add_argument("--batches", type=int, default=settings.BATCHES)
    run.add_argument("--workers", type=int, default=settings.WORKERS)
    run.add_argument(
        "--duration", type=float, default=settings.DURATION, help="Event acquisition span (s)"
    )
    run.add_argument("--events", action="store_true", help="Also write event streams")
    run.add_argument("--no-progress", action="store_true")

    plot = commands.add_parser("plot", help="Write gnuplot data and script for a CSV")
    plot.add_argument("csv", type=str, help="Result or histogram CSV")
    plot.add_argument("--out", default=None, help="Directory for the .dat and .gp files")
    return parser


def _load(path: Optional[str]) -> ApparatusConfig:
    if path:
        return load_config(path)
    return with_updates(ApparatusConfig())


def cmd_run(args: argparse.Namespace) -> int:
    config = _load(args.config)
    if args.ensemble < args.batches:
        raise ConfigurationError("ensemble >= batches", f"{args.ensemble} < {args.batches}")
    seed = args.seed if args.seed is not None else fresh_seed()
    options = RunOptions(
        seed=seed,
        out_dir=Path(args.out),
        ensemble=args.ensemble,
        batches=args.batches,
        workers=args.workers,
        duration=args.duration,
        progress=settings.PROGRESS and not args.no_progress,
        write_event_files=args.events,
    )
    manifest = run_experiment(Experiment(args.experiment), config, options)
    for key in sorted(manifest.metrics):
        print(f"{key}={manifest.metrics[key]}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    data_path, script_path = write_plot_files(args.csv, args.out)
    print(script_path)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level)

    handlers = {"run": cmd_run, "plot": cmd_plot}
    try:
        return handlers[args.command](args)
    except ConfigurationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_INVALID
    except (HbtError, ValidationError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INVALID
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
