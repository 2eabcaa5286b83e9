"""
Mixed-ADC detectors - command-line application
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import structlog

from . import __version__
from .cli.commands import COMMANDS, CommandContext
from .config.settings import get_settings
from .utils.exceptions import MixedAdcError

logger = structlog.get_logger(__name__)

EXIT_FAILURE = 1


def configure_logging(level: str = "INFO", fmt: str = "console") -> None:
    """Configure structlog on top of the stdlib logging tree (stderr)."""
    renderer = (
        structlog.processors.JSONRenderer()
        if fmt == "json"
        else structlog.dev.ConsoleRenderer()
    )
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(message)s",
        stream=sys.stderr,
        force=True,
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return number


def _nonnegative_int(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return number


def build_parser() -> argparse.ArgumentParser:
    """Subcommands simulate, se-predict, tune-step, sweep-mixed and validate."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="JSON config")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument(
        "--threads", type=_positive_int, default=None, help="worker threads"
    )
    common.add_argument(
        "--seed",
        type=_nonnegative_int,
        default=None,
        help="base seed, overrides the config",
    )
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING")

    parser = argparse.ArgumentParser(
        prog="mixedadc",
        description="GAMP detectors and state evolution for mixed-ADC uplinks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "Monte Carlo BER/MSE",
        "se-predict": "state-evolution predictions",
        "tune-step": "optimal quantizer step sizes",
        "sweep-mixed": "DQ/PDQ gap over high-resolution fractions",
        "validate": "check a config and print its resolved form",
    }
    for name in COMMANDS:
        subparsers.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    configure_logging(args.log_level or settings.log_level, settings.log_format)

    ctx = CommandContext(
        config_path=args.config,
        out_dir=args.out or Path(settings.output_dir),
        threads=args.threads or settings.threads,
        settings=settings,
        seed=args.seed,
    )
    logger.info(
        "command_started",
        command=args.command,
        config=str(ctx.config_path),
        threads=ctx.threads,
    )
    try:
        outcome = COMMANDS[args.command](ctx)
    except MixedAdcError as exc:
        logger.error("command_failed", command=args.command, **exc.to_dict())
        sys.stderr.write(f"error: {exc.detail}\n")
        return exc.exit_code
    except Exception as exc:
        logger.error(
            "Unhandled exception occurred",
            command=args.command,
            error=str(exc),
            exc_info=True,
        )
        return EXIT_FAILURE
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
