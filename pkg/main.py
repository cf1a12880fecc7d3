"""
Entry point for the ksflow command line.
"""
import argparse
import logging
import os
import sys

from config import (
    APP_NAME,
    APP_VERSION,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_WORKERS,
    EXIT_CONFIG_ERROR,
    EXIT_IO_ERROR,
    LOG_FORMAT,
    WORKERS_ENV_VAR,
)
from core.errors import ArtifactError, ConfigError
from core.manager import KSFlowManager
from services.config_parser import load_run_config

COMMANDS = ("simulate", "threshold", "verify", "sweep")

logger = logging.getLogger(APP_NAME)


def _configure_logging(level):
    """Configure root logging once for the process."""
    logging.basicConfig(level=level, format=LOG_FORMAT)
    root = logging.getLogger()
    root.setLevel(level)
    logging.captureWarnings(True)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description="Radial Keller-Segel mass-accumulation simulator and verification suite.",
    )
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("command", choices=COMMANDS, help="Subcommand to run")
    parser.add_argument("--config", required=True, help="Path to the JSON run configuration")
    parser.add_argument("--out", help="Output directory (overrides the config 'output' entry)")
    parser.add_argument("--workers", type=int, help=f"Worker processes (default: ${WORKERS_ENV_VAR} or 1)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    verbosity.add_argument("--quiet", action="store_true", help="Log warnings and errors only")
    return parser


def resolve_workers(flag, environ=None):
    """
    Worker count from the flag, then the environment, then the default.

    Raises:
        ConfigError: If the resolved value is not a positive integer
    """
    environ = os.environ if environ is None else environ
    if flag is not None:
        value, source = flag, "--workers"
    elif environ.get(WORKERS_ENV_VAR):
        value, source = environ[WORKERS_ENV_VAR], WORKERS_ENV_VAR
    else:
        return DEFAULT_WORKERS
    try:
        workers = int(value)
    except ValueError:
        raise ConfigError(f"{source} must be an integer, got {value!r}") from None
    if workers < 1:
        raise ConfigError(f"{source} must be >= 1, got {workers}")
    return workers


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    else:
        level = logging.INFO
    _configure_logging(level)

    try:
        workers = resolve_workers(args.workers)
        config = load_run_config(args.config)
    except ConfigError as err:
        logger.error("configuration error: %s", err)
        return EXIT_CONFIG_ERROR
    except ArtifactError as err:
        logger.error("I/O failure: %s", err)
        return EXIT_IO_ERROR

    out_dir = args.out or config.output or DEFAULT_OUTPUT_DIR
    logger.info("%s %s: %s -> %s (%d worker(s))", APP_NAME, args.command, args.config, out_dir, workers)
    return KSFlowManager(config, out_dir, workers).run(args.command)


if __name__ == "__main__":
    sys.exit(main())
