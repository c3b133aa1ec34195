import logging
from typing import List

from ..errors import ConfigError, LabError
from ..models.schemas import GridSpec, ReportRow, SmootherSpec
from ..services.estimator_service import EstimatorService, get_estimator_service
from ..services.progress import ProgressTracker
from ..services.spectral_service import band_support
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

DEFAULT_GRID = GridSpec.uniform(1, 32.0, 256)
STUDIES = ("constant", "refinement", "concentration", "hoshiro")


def register(subparsers) -> None:
    parser = subparsers.add_parser("estimate", help="Estimate smoothing constants and run refinement/concentration studies")
    parser.add_argument("expression", nargs="?", help="Symbol a(xi)")
    parser.add_argument("--study", choices=STUDIES, help="Study kind (default: constant)")
    parser.add_argument("--method", choices=("power_iteration", "ensemble"), help="Estimation method")
    parser.add_argument("--ladder", help="Point counts per axis for a refinement study, e.g. 256,512,1024")
    parser.add_argument("--widths", help="Concentration widths, e.g. 0.2,0.1,0.05,0.025")
    parser.add_argument("--center", help="Sphere radius (one value) or frequency point the fields concentrate on")
    parser.add_argument("--band-limit", type=float, help="Restrict test fields to |xi| <= this")
    parser.add_argument("--ensemble-size", type=int, help="Members per ensemble")
    add_estimate_arguments(parser)
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def _members(method: str, params: dict, estimator: EstimatorService) -> int:
    if method == "ensemble":
        return int(params.get("ensemble_size") or estimator.ensemble_size)
    return estimator.max_iterations


def run(args) -> int:
    config = load_config(
        args,
        "constant",
        params={
            "method": args.method,
            "ladder": parse_list(args.ladder, int),
            "widths": parse_list(args.widths),
            "center": parse_list(args.center),
            "band_limit": args.band_limit,
            "ensemble_size": args.ensemble_size,
        },
    )
    study = config.study.kind
    if study not in STUDIES:
        raise ConfigError(f"unknown estimate study '{study}'")
    params = config.study.params
    grid = grid_of(config, DEFAULT_GRID)
    a = symbol_of(config, grid.dimension)
    spec = estimate_spec_of(config, args, default_T=grid.lengths[0] / 4)
    method = params.get("method") or "power_iteration"

    estimator = get_estimator_service()
    tracker = ProgressTracker(f"estimate:{study}")
    rows: List[ReportRow] = []
    details = {"study": study, "method": method}

    try:
        if study == "constant":
            check_budget(grid, spec.time_samples, _members(method, params, estimator))
            support = band_support(params["band_limit"]) if params.get("band_limit") is not None else None
            estimate = estimator.estimate_constant(
                a, spec, grid, method=method, seed=config.seed, support=support, ensemble_size=params.get("ensemble_size")
            )
            rows.append(row(a.name, study, estimate.value, estimate_kind="constant", method=method,
                            residual=estimate.residual, **spec_fields(spec, grid)))
            details["estimate"] = estimate.model_dump()

        elif study == "refinement":
            ladder = params.get("ladder")
            if not ladder:
                raise ConfigError("refinement study needs a non-empty ladder")
            grids = [GridSpec(dimension=grid.dimension, lengths=grid.lengths, points=(int(N),) * grid.dimension) for N in ladder]
            check_budget(grids[-1], spec.time_samples, _members(method, params, estimator))
            results = estimator.refinement_study(
                a, spec, grids, method=method, seed=config.seed, band_limit=params.get("band_limit"), progress_callback=tracker
            )
            for g, result in zip(grids, results):
                rows.append(row(a.name, study, result["constant"], estimate_kind="constant", method=method,
                                residual=result["residual"], ladder_value=float(result["N"]), **spec_fields(spec, g)))
            details["ladder"] = results

        elif study == "concentration":
            widths = params.get("widths")
            if not widths:
                raise ConfigError("concentration study needs at least one width")
            center = params.get("center") or [1.0]
            center = center[0] if len(center) == 1 else tuple(center)
            check_budget(grid, spec.time_samples, _members(method, params, estimator) * len(widths) * 2)
            specs = {
                "classical": spec.model_copy(update={"smoother": SmootherSpec(kind="classical", exponent=spec.smoother.exponent)}),
                "invariant": spec.model_copy(update={"smoother": SmootherSpec(kind="invariant_power", exponent=spec.smoother.exponent)}),
            }
            table = estimator.concentration_study(
                a, specs, widths, center, grid, seed=config.seed, method=method,
                ensemble_size=params.get("ensemble_size") or 16, progress_callback=tracker,
            )
            for entry in table["rows"]:
                rows.append(row(a.name, study, entry["quotient"], estimate_kind="quotient", method=method,
                                ladder_value=entry["width"], **{**spec_fields(spec, grid), "T": entry["T"]}))
            if table["slope"] is not None:
                rows.append(row(a.name, "concentration-slope", table["slope"], estimate_kind="slope", method=method,
                                **spec_fields(spec, grid)))
            details["concentration"] = table

        else:
            check_budget(grid, spec.time_samples, 2 * estimator.max_iterations)
            result = estimator.hoshiro_comparison(a, spec, grid, seed=config.seed, band_limit=params.get("band_limit"))
            rows.append(row(a.name, study, result["hoshiro"], estimate_kind="hoshiro", method="power_iteration", **spec_fields(spec, grid)))
            rows.append(row(a.name, study, result["bound"], estimate_kind="invariant_bound", method="power_iteration", **spec_fields(spec, grid)))
            details["hoshiro"] = result
    except LabError as e:
        tracker.fail(e.message)
        raise

    tracker.complete({"rows": len(rows)})
    return finish("estimate", config, rows, details)
