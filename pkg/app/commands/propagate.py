import logging

import numpy as np

from ..models.schemas import GridSpec
from ..services.spectral_service import SpectralService, band_support
from .common import add_common_arguments, check_budget, finish, grid_of, load_config, parse_list, row, symbol_of

logger = logging.getLogger(__name__)

DEFAULT_GRID = GridSpec.uniform(1, 40.0, 256)


def register(subparsers) -> None:
    parser = subparsers.add_parser("propagate", help="Evolve a field exactly in time and emit plot data")
    parser.add_argument("expression", nargs="?", help="Symbol a(xi)")
    parser.add_argument("--times", help="Comma-separated times (default 0,1,2,4)")
    parser.add_argument("--center", help="Packet centre in frequency, comma-separated")
    parser.add_argument("--width", type=float, help="Packet width in frequency (default 1)")
    parser.add_argument("--band-limit", type=float, help="Use a random band-limited field instead of a packet")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args) -> int:
    config = load_config(
        args,
        "propagate",
        params={
            "times": parse_list(args.times),
            "center": parse_list(args.center),
            "width": args.width,
            "band_limit": args.band_limit,
        },
    )
    params = config.study.params
    grid = grid_of(config, DEFAULT_GRID)
    a = symbol_of(config, grid.dimension)
    times = params.get("times") or [0.0, 1.0, 2.0, 4.0]
    check_budget(grid, len(times))

    spectral = SpectralService()
    if params.get("band_limit") is not None:
        phi = spectral.random_band_limited(grid, band_support(params["band_limit"]), config.seed)
    else:
        center = params.get("center") or [0.0] * grid.dimension
        phi = spectral.random_smooth_packet(grid, tuple(center), params.get("width") or 1.0, config.seed)

    # plot along the first axis through the origin of the others
    index = (slice(None),) + tuple(N // 2 for N in grid.points[1:])
    x_axis = spectral.physical_mesh(grid)[index][:, 0]
    norm = phi.norm()
    rows, profiles = [], []
    for t in times:
        u = spectral.propagate(phi, a, t)
        deviation = abs(u.norm() / norm - 1.0)
        profiles.append(np.abs(u.values[index]).tolist())
        rows.append(row(a.name, "propagate", deviation, estimate_kind="unitarity", grid=grid.label(), ladder_value=t))
        logger.info(f"t={t:g}: unitarity deviation {deviation:.3g}")

    details = {"plot": {"x": x_axis.tolist(), "t": list(times), "abs_u": profiles}}
    return finish("propagate", config, rows, details)
