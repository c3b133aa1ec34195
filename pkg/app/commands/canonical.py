import logging
from typing import Dict, List

import numpy as np

from ..errors import ConfigError
from ..models.frequency_maps import CutoffSpec, FrequencyMap, LinearMap, RadialWarp
from ..models.schemas import GridSpec, ReportRow
from ..services.canonical_service import get_canonical_service
from .common import (
    add_common_arguments,
    add_estimate_arguments,
    check_budget,
    estimate_spec_of,
    finish,
    grid_of,
    load_config,
    parse_list,
    row,
    spec_fields,
    symbol_of,
)

logger = logging.getLogger(__name__)

STUDIES = ("probe", "dense", "equivalence", "rank")
DEFAULT_GRID = GridSpec.uniform(2, 16.0, 64)
DENSE_LIMIT = 4096


def register(subparsers) -> None:
    parser = subparsers.add_parser("canonical", help="Frequency changes of variables: boundedness and invariance checks")
    parser.add_argument("expression", nargs="?", help="Symbol sigma(xi) for the equivalence and rank studies")
    parser.add_argument("--study", choices=STUDIES, help="Check to run (default: equivalence)")
    parser.add_argument("--map", help="identity | shear:a | rotation:theta | scale:f | radial_scale:f | radial_cubic:b")
    parser.add_argument("--cutoff", help="full | ball:inner,outer[,center...] | cone:aperture[,r_min,r_max]")
    parser.add_argument("--kappa", type=float, help="Weight exponent of L^2_kappa for probe/dense (default 0)")
    parser.add_argument("--ensemble-size", type=int, help="Random fields per probe or equivalence study (default 16)")
    add_estimate_arguments(parser)
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def parse_map(text: str, dimension: int) -> FrequencyMap:
    kind, _, parameter = text.partition(":")
    try:
        value = float(parameter) if parameter else None
    except ValueError:
        raise ConfigError(f"map parameter '{parameter}' is not a number")
    if kind == "identity":
        return LinearMap.identity(dimension)
    if kind == "scale":
        return LinearMap.scaling(2.0 if value is None else value, dimension)
    if kind == "radial_scale":
        return RadialWarp.scale(dimension, 2.0 if value is None else value)
    if kind == "radial_cubic":
        return RadialWarp.cubic(dimension, 0.1 if value is None else value)
    if kind in ("shear", "rotation"):
        if dimension != 2:
            raise ConfigError(f"{kind} maps are two-dimensional, grid has n={dimension}")
        if kind == "shear":
            return LinearMap.shear(1.0 if value is None else value)
        return LinearMap.rotation(np.pi / 4 if value is None else value)
    raise ConfigError(f"unknown map '{text}'")


def parse_cutoff(text: str, dimension: int) -> CutoffSpec:
    kind, _, rest = text.partition(":")
    values = parse_list(rest) or []
    if kind == "full":
        return CutoffSpec("full", dimension)
    if kind == "ball":
        inner, outer = (values + [1.0, 2.0][len(values):])[:2]
        center = values[2:] or None
        if center is not None and len(center) != dimension:
            raise ConfigError(f"ball center needs {dimension} coordinates, got {len(center)}")
        return CutoffSpec("ball", dimension, center=center, inner=inner, outer=outer)
    if kind == "cone":
        aperture = values[0] if values else np.pi / 4
        band = (values[1], values[2]) if len(values) >= 3 else None
        return CutoffSpec("cone", dimension, aperture=aperture, radial_band=band)
    raise ConfigError(f"unknown cutoff '{text}'")


def run(args) -> int:
    config = load_config(
        args,
        "equivalence",
        params={
            "map": args.map,
            "cutoff": args.cutoff,
            "kappa": args.kappa,
            "ensemble_size": args.ensemble_size,
        },
    )
    study = config.study.kind
    if study not in STUDIES:
        raise ConfigError(f"unknown canonical study '{study}'")
    params = config.study.params
    grid = grid_of(config, DEFAULT_GRID)
    default_map = "shear:1" if grid.dimension == 2 else "scale:2"
    psi = parse_map(params.get("map") or default_map, grid.dimension)
    gamma = parse_cutoff(params.get("cutoff") or "ball:1,2", grid.dimension)
    kappa = float(params.get("kappa") or 0.0)
    ensemble_size = int(params.get("ensemble_size") or 16)
    service = get_canonical_service()
    label = f"{psi.label}|{gamma.label()}"
    rows: List[ReportRow] = []
    details: Dict = {"study": study, "map": psi.label, "cutoff": gamma.label()}

    if study == "probe":
        check_budget(grid, 1, ensemble_size)
        result = service.boundedness_probe(psi, gamma, kappa, grid, ensemble_size=ensemble_size, seed=config.seed)
        rows.append(row(label, study, result["norm"], estimate_kind="operator_norm", method="ensemble",
                        grid=grid.label(), ladder_value=kappa, flags=result["guarantee"] or ""))
        details["probe"] = result

    elif study == "dense":
        if grid.size > DENSE_LIMIT:
            raise ConfigError(f"dense operator needs at most {DENSE_LIMIT} grid points, grid has {grid.size}")
        value = service.operator_norm_dense(psi, gamma, kappa, grid)
        rows.append(row(label, study, value, estimate_kind="operator_norm", method="dense",
                        grid=grid.label(), ladder_value=kappa, flags=service.guarantee(psi, gamma, kappa) or ""))
        details["norm"] = value

    elif study == "equivalence":
        sigma = symbol_of(config, grid.dimension)
        spec = estimate_spec_of(config, args, default_T=grid.lengths[0] / 4)
        check_budget(grid, spec.time_samples, 2 * ensemble_size)
        result = service.equivalence_study(
            sigma, psi, gamma, spec.smoother, spec.weight, grid, spec.T,
            time_samples=spec.time_samples, ensemble_size=ensemble_size, seed=config.seed,
        )
        flags = f"q_flagged={int(result['flagged'])}"
        rows.append(row(f"{sigma.name} o {psi.label}", study, result["band"], estimate_kind="band", method="ensemble",
                        flags=flags, **spec_fields(spec, grid)))
        rows.append(row(f"{sigma.name} o {psi.label}", study, min(result["q_sup"], 1e300), estimate_kind="q_sup",
                        method="ensemble", flags=flags, **spec_fields(spec, grid)))
        details["equivalence"] = result

    else:
        if not isinstance(psi, LinearMap):
            raise ConfigError("rank study needs a linear map")
        sigma = symbol_of(config, grid.dimension)
        table = service.rank_invariance_check(sigma, psi)
        mismatched = sum(1 for entry in table if not entry["equal"])
        rows.append(row(f"{sigma.name} o {psi.label}", study, mismatched, estimate_kind="rank_mismatches",
                        grid=grid.label(), flags=f"points={len(table)}"))
        details["ranks"] = table

    return finish("canonical", config, rows, details)
