import logging
from typing import Dict, List

import numpy as np

from ..errors import ConfigError
from ..models.schemas import GridSpec, ReportRow
from ..services.comparison_service import ComparisonCase, get_comparison_service
from ..services.expression_parser import parse_profile, parse_symbol
from ..services.spectral_service import band_support
from .common import add_common_arguments, check_budget, finish, load_config, parse_list, row

logger = logging.getLogger(__name__)

STUDIES = ("model", "translation", "radial", "secondary")
DEFAULT_GRIDS = {
    "model": GridSpec.uniform(1, 4096.0, 8192),
    "model-2d": GridSpec(dimension=2, lengths=(128.0, 64.0), points=(256, 128)),
    "translation": GridSpec.uniform(1, 64.0, 1024),
    "radial": GridSpec.uniform(1, 4096.0, 8192),
    "secondary": GridSpec.uniform(1, 32.0, 256),
}


def register(subparsers) -> None:
    parser = subparsers.add_parser("compare", help="Check the comparison principles numerically")
    parser.add_argument("--study", choices=STUDIES, help="Check to run (default: model)")
    parser.add_argument("--model", help="Model orders as 'l=1 m=3'")
    parser.add_argument("--dimension", type=int, choices=(1, 2), help="Model dimension (default 1)")
    parser.add_argument("--x", help="Evaluation points, comma-separated")
    parser.add_argument("--x-tilde", help="Evaluation points for the right-hand side (radial study)")
    parser.add_argument("--f", help="Left symbol f (radial/secondary)")
    parser.add_argument("--g", help="Right symbol g (radial)")
    parser.add_argument("--sigma", help="Left smoother sigma(rho)")
    parser.add_argument("--tau", help="Right smoother tau(rho)")
    parser.add_argument("--support", help="chi as lo,hi")
    parser.add_argument("--s", type=float, help="Weight exponent for the secondary check")
    parser.add_argument("--T", type=float, dest="T", help="Time window for the secondary check")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def parse_model(text: str) -> Dict[str, float]:
    values = {}
    for token in text.replace(",", " ").split():
        key, _, value = token.partition("=")
        if key not in ("l", "m") or not value:
            raise ConfigError(f"cannot parse model orders '{text}', expected 'l=<order> m=<order>'")
        try:
            values[key] = float(value)
        except ValueError:
            raise ConfigError(f"model order '{value}' is not a number")
    return values


def run(args) -> int:
    model = parse_model(args.model) if args.model else {}
    config = load_config(
        args,
        "model",
        params={
            "l": model.get("l"),
            "m": model.get("m"),
            "dimension": args.dimension,
            "x": parse_list(args.x),
            "x_tilde": parse_list(args.x_tilde),
            "f": args.f,
            "g": args.g,
            "sigma": args.sigma,
            "tau": args.tau,
            "support": parse_list(args.support),
            "s": args.s,
            "T": args.T,
        },
    )
    study = config.study.kind
    if study not in STUDIES:
        raise ConfigError(f"unknown compare study '{study}'")
    params = config.study.params
    service = get_comparison_service()
    rows: List[ReportRow] = []
    details: Dict = {"study": study}

    if study == "model":
        dimension = int(params.get("dimension") or (config.grid.dimension if config.grid else 1))
        grid = config.grid or DEFAULT_GRIDS["model" if dimension == 1 else "model-2d"]
        l, m = float(params.get("l", 1.0)), float(params.get("m", 3.0))
        if dimension == 1:
            phi = service.spectral.random_smooth_packet(grid, (1.0,), 0.1, config.seed, one_sided_axis=0)
        else:
            phi = service.spectral.random_smooth_packet(grid, (0.0, 1.25), 0.08, config.seed)
        points = params.get("x") or [0.0]
        for x in points:
            result = service.model_equality_check(l, m, phi, x=x)
            rows.append(row(f"model l={l:g} m={m:g}", study, result["ratio"], estimate_kind="ratio",
                            grid=grid.label(), ladder_value=x))
            details.setdefault("points", []).append({"x": x, **result})

    elif study == "translation":
        grid = config.grid or DEFAULT_GRIDS["translation"]
        check_budget(grid, grid.points[0] + 1)
        phi = service.spectral.random_band_limited(grid, band_support(0.5 * min(grid.nyquist)), config.seed)
        points = params.get("x") or [0.0, 0.37, 1.1]
        deviation = service.translation_identity_check(phi, points)
        rows.append(row("xi1", study, deviation, estimate_kind="deviation", grid=grid.label()))
        details["deviation"] = deviation

    elif study == "radial":
        grid = config.grid or DEFAULT_GRIDS["radial"]
        support = params.get("support") or [0.5, 2.0]
        case = ComparisonCase(
            f=parse_symbol(params.get("f") or "rho^3", 1),
            g=parse_symbol(params.get("g") or "rho", 1),
            sigma=parse_profile(params.get("sigma") or "rho"),
            tau=parse_profile(params.get("tau") or "1/sqrt(3)"),
            support=(support[0], support[1]),
        )
        center = 0.5 * (support[0] + support[1])
        width = (support[1] - support[0]) / 14
        phi = service.spectral.random_smooth_packet(grid, (center,), width, config.seed, one_sided_axis=0)
        points = params.get("x") or [0.0]
        result = service.compare_radial(case, phi, points, x_tilde=params.get("x_tilde"))
        name = f"{case.f.name} vs {case.g.name}"
        rows.append(row(name, study, result["A"], estimate_kind="A", grid=grid.label()))
        rows.append(row(name, study, result["worst"], estimate_kind="worst_quotient", grid=grid.label()))
        details["comparison"] = result

    else:
        grid = config.grid or DEFAULT_GRIDS["secondary"]
        f = parse_symbol(params.get("f") or "rho^2", grid.dimension)
        support = params.get("support") or [0.0, np.inf]
        T = float(params.get("T") or grid.lengths[0] / 4)
        check_budget(grid, 64)
        phi = service.spectral.random_band_limited(grid, band_support(0.5 * min(grid.nyquist)), config.seed)
        result = service.secondary_comparison_check(
            f, parse_profile(params.get("sigma") or "sqrt(rho)"), (support[0], support[1]), float(params.get("s") or 1.0), phi, T
        )
        rows.append(row(f.name, study, result["A"], estimate_kind="A", grid=grid.label(), T=T))
        rows.append(row(f.name, study, result["ratio"], estimate_kind="ratio", grid=grid.label(), T=T))
        details["secondary"] = result

    return finish("compare", config, rows, details)
