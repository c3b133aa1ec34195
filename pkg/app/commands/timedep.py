import logging

from ..errors import ConfigError
from ..models.schemas import GridSpec
from ..models.time_coefficients import TimeCoefficient
from ..services.estimator_service import get_estimator_service
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


def register(subparsers) -> None:
    parser = subparsers.add_parser("timedep", help="Smoothing for i u_t + c(t) a(D) u = 0 by reparametrizing time")
    parser.add_argument("expression", nargs="?", help="Symbol a(xi)")
    parser.add_argument("--c", help="const:<value> | lorentzian | expression in t (default const:2)")
    parser.add_argument("--interval", help="alpha,beta (default -T/2,T/2)")
    add_estimate_arguments(parser)
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def parse_coefficient(text: str, alpha: float, beta: float) -> TimeCoefficient:
    kind, _, value = text.partition(":")
    if kind == "const":
        try:
            return TimeCoefficient.constant(float(value or 1.0), alpha, beta)
        except ValueError:
            raise ConfigError(f"constant coefficient '{value}' is not a number")
    if kind == "lorentzian":
        return TimeCoefficient.lorentzian(alpha, beta)
    return TimeCoefficient.from_expression(text, alpha, beta)


def run(args) -> int:
    config = load_config(args, "timedep", params={"c": args.c, "interval": parse_list(args.interval)})
    params = config.study.params
    grid = grid_of(config, DEFAULT_GRID)
    a = symbol_of(config, grid.dimension)
    spec = estimate_spec_of(config, args, default_T=grid.lengths[0] / 4)
    interval = params.get("interval") or [-spec.T / 2, spec.T / 2]
    if len(interval) != 2:
        raise ConfigError(f"--interval needs alpha,beta, got {interval}")
    c = parse_coefficient(params.get("c") or "const:2", interval[0], interval[1])
    check_budget(grid, spec.time_samples, 3)

    estimator = get_estimator_service()
    phi = estimator.spectral.random_band_limited(grid, band_support(0.5 * min(grid.nyquist)), config.seed)
    reparametrized = estimator.timedep_norm(a, c, spec, phi)
    tau_start, tau_end = c.tau_interval()
    reference = estimator.spacetime_norm(a, spec, phi, interval=(min(tau_start, tau_end), max(tau_start, tau_end)))
    direct = estimator.timedep_norm(a, c, spec, phi, sampling="direct")
    equality = abs(reparametrized - reference) / reference
    sampling = abs(direct - reparametrized) / reparametrized
    logger.info(f"timedep {c.label} on [{c.alpha:g}, {c.beta:g}]: equality deviation {equality:.3g}, sampling deviation {sampling:.3g}")

    fields = {**spec_fields(spec, grid), "method": c.label}
    rows = [
        row(a.name, "timedep", reparametrized, estimate_kind="norm", **fields),
        row(a.name, "timedep", equality, estimate_kind="equality_deviation", **fields),
        row(a.name, "timedep", sampling, estimate_kind="sampling_deviation", **fields),
    ]
    details = {
        "coefficient": c.label,
        "interval": [c.alpha, c.beta],
        "tau_interval": [tau_start, tau_end],
        "reparametrized": reparametrized,
        "reference": reference,
        "direct": direct,
        "nodes": estimator.timedep_nodes(c, min(spec.time_samples, 17)).tolist(),
    }
    return finish("timedep", config, rows, details)
