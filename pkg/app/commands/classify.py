import sys
import logging

from ..services.symbol_service import get_symbol_service
from .common import add_common_arguments, finish, load_config, row, symbol_of

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("classify", help="Check the dispersiveness hypotheses of a symbol")
    parser.add_argument("expression", nargs="?", help="Symbol in the expression mini-language")
    parser.add_argument("--dimension", type=int, help="Spatial dimension (default: inferred)")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def _table(report) -> str:
    lines = [f"symbol      {report.symbol}  (n={report.dimension}, m={report.order:g}, {report.kind})"]
    for name in ("H", "L", "HL", "Lprime"):
        result = getattr(report, name)
        witness = "" if result.witness is None else f"  witness={result.witness:.6g}"
        lines.append(f"{name:<11} {str(result.holds):<6} {result.status}{witness}")
    for point in report.critical_points:
        lines.append(f"critical    {point.point}  rank={point.rank}  signature={point.signature}")
    if report.profile_zeros is not None:
        lines.append(f"f' zeros    {report.profile_zeros}")
    lines.append(f"theorems    {', '.join(report.applicable_theorems) or '-'}")
    return "\n".join(lines)


def run(args) -> int:
    config = load_config(args, "classify")
    if args.dimension is not None:
        config = config.model_copy(update={"dimension": args.dimension})
    a = symbol_of(config, config.grid.dimension if config.grid else None)
    report = get_symbol_service().classify(a)
    print(_table(report), file=sys.stderr)

    rows = [
        row(
            report.symbol,
            "classify",
            value=len(report.critical_points),
            flags=report.flag_string(),
            estimate_kind="critical_points",
            method=",".join(report.applicable_theorems),
        )
    ]
    details = {"classification": report.model_dump(mode="json")}
    return finish("classify", config, rows, details, summary=details)
