import logging
import os

from ..services.run_store import get_run_store
from .common import emit

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("report", help="Merge run folders into merged.csv and summary.json")
    parser.add_argument("directory", nargs="?", help="Output root holding run folders (default: LAB_OUTPUT_DIR or 'out')")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.set_defaults(handler=run)


def run(args) -> int:
    directory = args.directory or os.getenv("LAB_OUTPUT_DIR", "out")
    store = get_run_store(directory)
    summary = store.merge()
    emit({"command": "report", "directory": directory, **summary})
    return 0
