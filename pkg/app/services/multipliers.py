"""Spatial weights w(x) and frequency smoothers sigma(xi) sampled on a grid."""
import logging
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.integrate import nquad

from ..errors import SymbolError, WeightError
from ..models.schemas import GridSpec, SmootherSpec, WeightSpec
from ..models.symbols import Symbol

logger = logging.getLogger(__name__)


@lru_cache(maxsize=64)
def cell_average_power(delta: float, spacing: tuple) -> float:
    """Average of |x|^delta over the grid cell centred at the origin (finite for delta > -n)"""
    n = len(spacing)
    if delta <= -n:
        raise WeightError(f"|x|^{delta} is not integrable near the origin in dimension {n}")
    halves = [h / 2 for h in spacing]
    if n == 1:
        return halves[0] ** delta / (delta + 1)
    # by symmetry the average over the cell equals the average over its positive orthant
    value, _ = nquad(
        lambda *x: sum(c * c for c in x) ** (delta / 2),
        [[0.0, h] for h in halves],
        opts={"limit": 200, "epsabs": 1e-12, "epsrel": 1e-10},
    )
    return value / float(np.prod(halves))


def weight_on_grid(weight: WeightSpec, grid: GridSpec, x: np.ndarray) -> np.ndarray:
    """w(x_j) on the physical mesh `x` of shape grid.shape + (n,)"""
    if weight.kind == "unit":
        return np.ones(grid.shape)
    if weight.axis is not None and weight.axis >= grid.dimension:
        raise WeightError(f"weight axis {weight.axis + 1} exceeds dimension {grid.dimension}")
    if weight.kind == "bracket":
        if weight.axis is not None:
            squared = x[..., weight.axis] ** 2
        else:
            squared = np.sum(x ** 2, axis=-1)
        return (1.0 + squared) ** (-weight.parameter / 2)

    delta = weight.parameter
    radius = np.linalg.norm(x, axis=-1) if weight.axis is None else np.abs(x[..., weight.axis])
    origin = radius == 0
    safe = np.where(origin, 1.0, radius)
    values = safe ** delta
    if np.any(origin):
        if delta < 0:
            spacing = grid.spacing if weight.axis is None else (grid.spacing[weight.axis],)
            average = cell_average_power(delta, tuple(spacing))
            values = np.where(origin, average, values)
        else:
            values = np.where(origin, 1.0 if delta == 0 else 0.0, values)
    return values


def smoother_on_lattice(
    smoother: SmootherSpec,
    xi: np.ndarray,
    a: Optional[Symbol] = None,
    gradient: Optional[np.ndarray] = None,
    values: Optional[np.ndarray] = None,
) -> np.ndarray:
    """sigma(xi) on the lattice `xi` of shape (..., n); modes where a negative power is singular are set to 0"""
    if smoother.needs_symbol and a is None:
        raise SymbolError(f"smoother '{smoother.kind}' needs the symbol a")
    eta = smoother.exponent
    kind = smoother.kind
    if kind == "unit":
        sigma = np.ones(xi.shape[:-1])
    elif kind in ("classical", "invariant_power"):
        if kind == "classical":
            base = np.linalg.norm(xi, axis=-1)
        else:
            base = np.linalg.norm(a.gradient(xi) if gradient is None else gradient, axis=-1)
        if eta < 0:
            safe = np.where(base > 0, base, 1.0)
            sigma = np.where(base > 0, safe ** eta, 0.0)
        else:
            sigma = base ** eta
    elif kind == "bracket":
        sigma = (1.0 + np.sum(xi ** 2, axis=-1)) ** (eta / 2)
    elif kind == "invariant_bracket":
        g = a.gradient(xi) if gradient is None else gradient
        sigma = (1.0 + np.sum(g ** 2, axis=-1)) ** (eta / 2)
    elif kind == "hoshiro":
        a_values = a.evaluate(xi) if values is None else values
        sigma = (1.0 + np.sum(xi ** 2, axis=-1)) ** (-eta / 2) * np.sqrt(np.abs(a_values))
    else:
        raise SymbolError(f"unknown smoother kind '{kind}'")
    return smoother.scale * sigma
