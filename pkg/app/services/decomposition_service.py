import os
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from ..errors import SymbolError
from ..models.fields import ComplexField
from ..models.schemas import EstimateSpec, GridSpec, SmootherSpec, WeightSpec
from ..models.symbols import PolynomialSymbol
from .estimator_service import EstimatorService, ordered_map
from .spectral_service import SpectralService

logger = logging.getLogger(__name__)

IMAGINARY_TOL = 1e-9
MERGE_TOL = 1e-8


def real_roots(coefficients: np.ndarray) -> np.ndarray:
    """Sorted real roots of sum_k c_k x^k from companion-matrix eigenvalues, near-multiple roots merged"""
    c = P.polytrim(np.asarray(coefficients, dtype=float), tol=0.0)
    if len(c) <= 1:
        return np.empty(0)
    roots = P.polyroots(c)
    real = np.sort(roots[np.abs(roots.imag) < IMAGINARY_TOL].real)
    merged: List[float] = []
    for r in real:
        if merged and abs(r - merged[-1]) <= MERGE_TOL * max(1.0, abs(r)):
            continue
        merged.append(float(r))
    return np.array(merged)


@dataclass
class MonotoneDecomposition:
    """Pieces of the lattice on which a is strictly monotone along `axis`.

    `labels` holds a piece id per lattice point (-1 where d_axis a vanishes or the
    point sits on a root); `pieces[id] = (k, l)` names the l-th interval of slices
    with k real roots.
    """

    axis: int
    grid: GridSpec
    roots: List[np.ndarray]
    labels: np.ndarray
    pieces: List[Tuple[int, int]]
    eta: np.ndarray
    sign_consistent: bool = True
    notes: List[str] = field(default_factory=list)

    def indicator(self, piece: int) -> np.ndarray:
        return (self.labels == piece).astype(float)

    @property
    def breakpoints(self) -> List[float]:
        """Distinct roots over all slices"""
        values = np.concatenate(self.roots) if self.roots else np.empty(0)
        return sorted({round(float(v), 12) for v in values})

    @property
    def eta_max(self) -> float:
        return float(np.max(self.eta)) if self.eta.size else 0.0


class DecompositionService:
    """Monotone decomposition of polynomial symbols and the per-axis assembly of the invariant estimate"""

    def __init__(self, spectral_service: Optional[SpectralService] = None, estimator_service: Optional[EstimatorService] = None):
        self.spectral = spectral_service or SpectralService()
        self.estimator = estimator_service or EstimatorService(self.spectral)
        self.workers = int(os.getenv("LAB_THREADS", "1"))
        logger.info("Decomposition service initialized")

    def combiner(self, a: PolynomialSymbol, xi: np.ndarray) -> np.ndarray:
        """eta = |grad a|^{1/2} / sum_j |d_j a|^{1/2}, zero where grad a vanishes"""
        g = a.gradient(xi)
        total = np.sum(np.sqrt(np.abs(g)), axis=-1)
        safe = np.where(total > 0, total, 1.0)
        return np.where(total > 0, np.sqrt(np.linalg.norm(g, axis=-1)) / safe, 0.0)

    def monotone_decomposition(self, a: PolynomialSymbol, axis: int, grid: GridSpec) -> MonotoneDecomposition:
        if not isinstance(a, PolynomialSymbol):
            raise SymbolError(f"monotone decomposition needs a polynomial symbol, got {a.kind}")
        if a.degree == 0:
            raise SymbolError("monotone decomposition needs a non-constant polynomial")
        if not 0 <= axis < grid.dimension or grid.dimension != a.dimension:
            raise SymbolError(f"axis {axis} invalid for a {a.dimension}-dimensional symbol on grid {grid.label()}")

        mesh = np.moveaxis(self.spectral.frequency_mesh(grid), axis, -2)  # (..., N_axis, n)
        line = mesh.reshape(-1, grid.points[axis], grid.dimension)
        others = [j for j in range(grid.dimension) if j != axis]
        slices = line[:, 0, :][:, others]
        coefficients = a.axis_derivative_coefficients(axis, slices)

        chunks = np.array_split(np.arange(len(coefficients)), max(1, min(len(coefficients), 64)))
        roots: List[np.ndarray] = [
            r for block in ordered_map(lambda idx: [real_roots(coefficients[i]) for i in idx], chunks, self.workers) for r in block
        ]

        derivative = a.gradient(line)[..., axis]
        coordinate = line[..., axis]
        labels = np.full(coordinate.shape, -1, dtype=np.int64)
        piece_ids: Dict[Tuple[int, int], int] = {}
        sign_consistent = True
        for s, r in enumerate(roots):
            values = coordinate[s]
            nonzero = derivative[s] != 0
            if len(r):
                position = np.searchsorted(r, values)
                distance = np.min(np.abs(values[:, None] - r[None, :]), axis=1)
                on_root = distance <= MERGE_TOL * np.maximum(1.0, np.abs(values))
            else:
                position = np.zeros(len(values), dtype=np.int64)
                on_root = np.zeros(len(values), dtype=bool)
            usable = nonzero & ~on_root
            for l in np.unique(position[usable]):
                members = usable & (position == l)
                signs = np.sign(derivative[s][members])
                if np.any(signs != signs[0]):
                    sign_consistent = False
                key = (len(r), int(l))
                if key not in piece_ids:
                    piece_ids[key] = len(piece_ids)
                labels[s][members] = piece_ids[key]

        shape = tuple(grid.points[j] for j in others) + (grid.points[axis],)
        labels = np.moveaxis(labels.reshape(shape), -1, axis)
        pieces = sorted(piece_ids, key=piece_ids.get)
        eta = self.combiner(a, self.spectral.frequency_mesh(grid))
        decomposition = MonotoneDecomposition(
            axis=axis, grid=grid, roots=roots, labels=labels, pieces=pieces, eta=eta, sign_consistent=sign_consistent
        )
        if not sign_consistent:
            decomposition.notes.append("sign of the axis derivative changes inside a piece")
            logger.warning(f"decomposition of {a.name} along axis {axis + 1}: inconsistent sign inside a piece")
        logger.info(f"decomposition of {a.name} along axis {axis + 1}: {len(pieces)} pieces")
        return decomposition

    def assemble_polynomial_estimate(
        self,
        a: PolynomialSymbol,
        s: float,
        phi: ComplexField,
        T: float,
        time_samples: int = 64,
    ) -> Dict[str, Any]:
        """Piece, axis and combined ratios, with combined <= sum over axes of the eta-substituted axis ratios"""
        grid = phi.grid
        xi = self.spectral.frequency_mesh(grid)
        gradient = a.gradient(xi)
        eta = self.combiner(a, xi)
        norm = phi.norm()

        def spec(weight: WeightSpec, smoother: SmootherSpec) -> EstimateSpec:
            return EstimateSpec(weight=weight, smoother=smoother, T=T, time_samples=time_samples)

        unit = SmootherSpec(kind="unit")
        piece_rows, axis_rows = [], []
        bound = 0.0
        for axis in range(grid.dimension):
            decomposition = self.monotone_decomposition(a, axis, grid)
            axis_spec = spec(WeightSpec(kind="bracket", parameter=s, axis=axis if grid.dimension > 1 else None), unit)
            root = np.sqrt(np.abs(gradient[..., axis]))
            piece_sum = 0.0
            for piece, key in enumerate(decomposition.pieces):
                ratio = self.estimator.smoothing_ratio(a, axis_spec, phi, extra_multiplier=decomposition.indicator(piece) * root)
                piece_sum += ratio
                piece_rows.append({"axis": axis, "piece": piece, "roots": key[0], "interval": key[1], "ratio": ratio})
            axis_ratio = self.estimator.smoothing_ratio(a, axis_spec, phi, extra_multiplier=root)
            substituted = self.estimator.spacetime_norm(a, axis_spec, phi, extra_multiplier=root * eta) / norm
            bound += substituted
            axis_rows.append(
                {"axis": axis, "ratio": axis_ratio, "piece_sum": piece_sum, "eta_substituted": substituted,
                 "pieces": len(decomposition.pieces)}
            )

        combined_spec = spec(WeightSpec(kind="bracket", parameter=s), SmootherSpec(kind="invariant_power", exponent=0.5))
        combined = self.estimator.smoothing_ratio(a, combined_spec, phi)
        holds = combined <= bound * (1 + 1e-9)
        if not holds:
            logger.warning(f"combined ratio {combined:.6g} exceeds per-axis bound {bound:.6g}")
        return {
            "pieces": piece_rows,
            "axes": axis_rows,
            "combined": combined,
            "bound": bound,
            "holds": holds,
            "eta_max": float(np.max(eta)),
        }


def get_decomposition_service() -> DecompositionService:
    return DecompositionService()
