import os
import sys
import json
import logging
import argparse
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from . import __version__
from .commands import canonical, classify, compare, decompose, estimate, propagate, report, timedep
from .errors import ConfigError, LabError
from .models.schemas import ErrorResponse

# Load .env.local first (takes precedence), then .env
load_dotenv(".env.local")
load_dotenv()

logger = logging.getLogger(__name__)

COMMANDS = (classify, propagate, estimate, compare, decompose, canonical, timedep, report)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothing-lab",
        description="Numerical laboratory for global smoothing estimates of dispersive equations",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for module in COMMANDS:
        module.register(subparsers)
    return parser


def configure_logging(level: Optional[str]) -> None:
    name = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
        force=True,
    )


def _report_error(error: ErrorResponse) -> None:
    json.dump(error.model_dump(), sys.stderr, indent=2)
    sys.stderr.write("\n")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(getattr(args, "log_level", None))
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            _report_error(ErrorResponse(error="--threads must be at least 1", code=ConfigError.code))
            return ConfigError.exit_code
        os.environ["LAB_THREADS"] = str(args.threads)

    logger.info(f"Running '{args.command}' (version {__version__})")
    try:
        return args.handler(args)
    except LabError as e:
        logger.error(f"{args.command} failed: {e.message}")
        _report_error(ErrorResponse(error=e.message, detail=e.detail, code=e.code))
        return e.exit_code
    except ValidationError as e:
        error = ConfigError("invalid configuration", detail=str(e))
        logger.error(f"{args.command} failed: {str(e)}")
        _report_error(ErrorResponse(error=error.message, detail=error.detail, code=error.code))
        return error.exit_code
    except Exception as e:
        logger.exception(f"Unhandled exception in {args.command}: {str(e)}")
        _report_error(ErrorResponse(error="Internal error", detail=str(e), code="internal_error"))
        return 1


if __name__ == "__main__":
    sys.exit(main())
