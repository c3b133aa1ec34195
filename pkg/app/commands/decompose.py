import sys
import logging
from typing import Dict, List

from ..errors import ConfigError, SymbolError
from ..models.schemas import GridSpec, ReportRow
from ..models.symbols import PolynomialSymbol
from ..services.decomposition_service import get_decomposition_service
from ..services.spectral_service import band_support
from .common import add_common_arguments, check_budget, finish, grid_of, load_config, row, symbol_of

logger = logging.getLogger(__name__)

DEFAULT_GRID = GridSpec.uniform(1, 32.0, 256)


def register(subparsers) -> None:
    parser = subparsers.add_parser("decompose", help="Split the lattice into pieces where a polynomial symbol is monotone")
    parser.add_argument("expression", nargs="?", help="Polynomial symbol a(xi)")
    parser.add_argument("--axis", type=int, help="Axis j (1-based); all axes when omitted")
    parser.add_argument("--assemble", action="store_true", help="Also assemble the per-axis smoothing estimate")
    parser.add_argument("--s", type=float, help="Bracket weight exponent for --assemble (default 1)")
    parser.add_argument("--T", type=float, dest="T", help="Time window for --assemble")
    parser.add_argument("--time-samples", type=int, help="Trapezoid nodes for --assemble")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def _root_table(decomposition) -> List[Dict]:
    """Distinct root sets with the number of slices sharing each"""
    counts: Dict[tuple, int] = {}
    for r in decomposition.roots:
        key = tuple(round(float(v), 10) for v in r)
        counts[key] = counts.get(key, 0) + 1
    return [{"roots": list(key), "slices": count} for key, count in sorted(counts.items(), key=lambda kv: (len(kv[0]), kv[0]))]


def run(args) -> int:
    config = load_config(
        args,
        "decompose",
        params={
            "axis": args.axis,
            "assemble": args.assemble or None,
            "s": args.s,
            "T": args.T,
            "time_samples": args.time_samples,
        },
    )
    params = config.study.params
    grid = grid_of(config, DEFAULT_GRID)
    a = symbol_of(config, grid.dimension)
    if not isinstance(a, PolynomialSymbol):
        raise SymbolError(f"'{a.name}' is not a polynomial symbol")
    if params.get("axis") is not None:
        axis = int(params["axis"])
        if not 1 <= axis <= grid.dimension:
            raise ConfigError(f"--axis must lie in 1..{grid.dimension}, got {axis}")
        axes = [axis - 1]
    else:
        axes = list(range(grid.dimension))

    service = get_decomposition_service()
    rows: List[ReportRow] = []
    details: Dict = {"axes": []}
    for axis in axes:
        decomposition = service.monotone_decomposition(a, axis, grid)
        breakpoints = decomposition.breakpoints
        print(f"axis {axis + 1}: {len(decomposition.pieces)} pieces, breakpoints {breakpoints}", file=sys.stderr)
        rows.append(row(a.name, "decompose", len(decomposition.pieces), estimate_kind="pieces",
                        grid=grid.label(), ladder_value=axis + 1, flags=f"sign_consistent={int(decomposition.sign_consistent)}"))
        details["axes"].append(
            {
                "axis": axis + 1,
                "pieces": [{"roots": k, "interval": l} for k, l in decomposition.pieces],
                "breakpoints": breakpoints,
                "root_table": _root_table(decomposition),
                "eta_max": decomposition.eta_max,
                "notes": decomposition.notes,
            }
        )

    if params.get("assemble"):
        T = float(params.get("T") or grid.lengths[0] / 4)
        time_samples = int(params.get("time_samples") or 64)
        s = float(params.get("s") or 1.0)
        check_budget(grid, time_samples, 2 * grid.dimension + sum(len(entry["pieces"]) for entry in details["axes"]))
        phi = service.spectral.random_band_limited(grid, band_support(0.5 * min(grid.nyquist)), config.seed)
        assembly = service.assemble_polynomial_estimate(a, s, phi, T, time_samples)
        label = f"bracket:{s:g}"
        rows.append(row(a.name, "assemble", assembly["combined"], estimate_kind="combined", weight=label,
                        grid=grid.label(), T=T, time_samples=time_samples))
        rows.append(row(a.name, "assemble", assembly["bound"], estimate_kind="axis_bound", weight=label,
                        grid=grid.label(), T=T, time_samples=time_samples, flags=f"holds={int(assembly['holds'])}"))
        details["assembly"] = assembly

    return finish("decompose", config, rows, details)
