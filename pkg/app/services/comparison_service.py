"""Comparison principles checked numerically at fixed evaluation points.

Time norms here are L^2 over the whole time line, realised on the torus by a
window in which the data has passed the evaluation point but not yet wrapped
around. Pointwise values come from direct sums over the nonzero modes.
"""
import os
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from ..errors import FieldError, GridError, HypothesisError
from ..models.fields import ComplexField
from ..models.schemas import EstimateSpec, GridSpec, SmootherSpec, WeightSpec
from ..models.symbols import Symbol
from .estimator_service import EstimatorService, ordered_map, trapezoid_weights
from .spectral_service import SpectralService

logger = logging.getLogger(__name__)

Profile = Callable[[np.ndarray], np.ndarray]

_CHUNK_ELEMENTS = 2 ** 22


@dataclass(frozen=True)
class ComparisonCase:
    """Two one-dimensional flows e^{itf(D)}, e^{itg(D)} with smoothers sigma, tau on chi = [lo, hi]"""

    f: Symbol
    g: Symbol
    sigma: Profile
    tau: Profile
    support: Tuple[float, float]
    label: str = "case"

    def chi(self, xi: np.ndarray) -> np.ndarray:
        lo, hi = self.support
        return (xi >= lo) & (xi <= hi)


class ComparisonService:
    def __init__(self, spectral_service: Optional[SpectralService] = None, estimator_service: Optional[EstimatorService] = None):
        self.spectral = spectral_service or SpectralService()
        self.estimator = estimator_service or EstimatorService(self.spectral)
        self.workers = int(os.getenv("LAB_THREADS", "1"))
        self.window_fraction = float(os.getenv("LAB_WINDOW_FRACTION", "0.45"))
        logger.info("Comparison service initialized")

    # -- pointwise time norms -------------------------------------------------

    def pointwise_time_norm(
        self,
        grid: GridSpec,
        spectrum: np.ndarray,
        a_values: np.ndarray,
        multiplier: np.ndarray,
        x: Sequence[float],
        times: np.ndarray,
        free_axis: Optional[int] = None,
    ) -> float:
        """||m(D) e^{ita(D)} phi(x)||_{L^2(t)} by the trapezoid rule over `times`.

        With `free_axis` set, the norm is also taken in L^2 over that coordinate
        (its full period), the other coordinates fixed at x.
        """
        with np.errstate(divide="ignore", invalid="ignore"):
            coefficients = np.where(spectrum != 0, multiplier * spectrum, 0.0).reshape(-1) / np.sqrt(grid.size)
        magnitude = np.abs(coefficients)
        keep = np.flatnonzero(magnitude > 1e-15 * magnitude.max()) if magnitude.max() > 0 else np.array([], dtype=int)
        if len(keep) == 0:
            return 0.0
        xi = self.spectral.frequency_lattice(grid)[keep]
        c = coefficients[keep]
        a = a_values.reshape(-1)[keep]
        point = np.asarray(x, dtype=float).reshape(grid.dimension)

        starts = None
        if free_axis is None:
            c = c * np.exp(1j * (xi @ point))
        else:
            fixed = [j for j in range(grid.dimension) if j != free_axis]
            c = c * np.exp(1j * (xi[:, fixed] @ point[fixed]))
            labels = self.spectral.wavenumbers(grid).reshape(-1, grid.dimension)[keep, free_axis]
            order = np.argsort(labels, kind="stable")
            c, a, labels = c[order], a[order], labels[order]
            starts = np.flatnonzero(np.r_[True, np.diff(labels) != 0])

        times = np.asarray(times, dtype=float)
        chunk = max(1, _CHUNK_ELEMENTS // len(c))
        blocks = [times[i:i + chunk] for i in range(0, len(times), chunk)]

        def energies(block: np.ndarray) -> np.ndarray:
            terms = np.exp(1j * np.outer(block, a)) * c
            if starts is None:
                return np.abs(terms.sum(axis=1)) ** 2
            grouped = np.add.reduceat(terms, starts, axis=1)
            return grid.lengths[free_axis] * np.sum(np.abs(grouped) ** 2, axis=1)

        values = np.concatenate(ordered_map(energies, blocks, self.workers))
        _, weights = trapezoid_weights(times[0], times[-1], len(times))
        return float(np.sqrt(np.dot(weights, values)))

    def passage_window(
        self,
        grid: GridSpec,
        spectrum: np.ndarray,
        a_values: np.ndarray,
        velocity: np.ndarray,
        axis: int = 0,
    ) -> np.ndarray:
        """Time nodes on [-T, T] with T a fraction of the wrap time L/v_max along `axis`.

        The step resolves the spread of a(xi) over the support.
        """
        mask = np.abs(spectrum) > 1e-12 * np.max(np.abs(spectrum))
        speeds = np.abs(velocity[mask])
        v_max = float(np.max(speeds)) if speeds.size else 0.0
        if v_max == 0:
            raise FieldError("data does not move: group velocity vanishes on the support")
        T = self.window_fraction * grid.lengths[axis] / v_max
        spread = float(np.ptp(a_values[mask]))
        dt = np.pi / spread if spread > 0 else T / 64
        count = max(65, int(np.ceil(2 * T / dt)) + 1)
        logger.debug(f"passage window T={T:.6g}, {count} nodes (v_max={v_max:.6g})")
        return np.linspace(-T, T, count)

    # -- checks --------------------------------------------------------------

    def translation_identity_check(self, phi: ComplexField, x_samples: Sequence[float]) -> float:
        """Max over x of | ||e^{itD} phi(x)||_{L^2(one period)} / ||phi|| - 1 |"""
        grid = phi.grid
        if grid.dimension != 1:
            raise GridError("translation identity is checked in one dimension")
        norm = phi.norm()
        if norm == 0:
            raise FieldError("translation identity needs a nonzero field")
        spectrum = self.spectral.to_frequency(phi).values
        xi = self.spectral.frequency_mesh(grid)[..., 0]
        length = grid.lengths[0]
        times = np.linspace(-length / 2, length / 2, grid.points[0] + 1)
        deviations = []
        for x in x_samples:
            value = self.pointwise_time_norm(grid, spectrum, xi, np.ones(grid.shape), [x], times)
            deviations.append(abs(value / norm - 1.0))
        worst = float(max(deviations))
        logger.info(f"translation identity: max deviation {worst:.3g} over {len(deviations)} points")
        return worst

    def model_equality_check(self, l: float, m: float, phi: ComplexField, x: float = 0.0) -> Dict[str, Any]:
        """Compare the model flows of orders m and l at a fixed point.

        1D: |D|^{(m-1)/2} e^{it|D|^m} against |D|^{(l-1)/2} e^{it|D|^l}, expected ratio sqrt(l/m)
        for one-sided data. 2D: |D_y|^{(m-1)/2} e^{itD_x|D_y|^{m-1}} against the same with l,
        normed over (t, y) at fixed x, expected ratio 1.
        """
        if l <= 0 or m <= 0:
            raise HypothesisError(f"orders must be positive, got l={l}, m={m}")
        grid = phi.grid
        spectrum = self.spectral.to_frequency(phi).values
        xi = self.spectral.frequency_mesh(grid)
        support = np.abs(spectrum) > 1e-12 * np.max(np.abs(spectrum))
        spectrum = np.where(support, spectrum, 0.0)

        if grid.dimension == 1:
            k = xi[..., 0]
            if np.any(support & (k > 0)) and np.any(support & (k < 0)):
                raise FieldError("model equality needs one-sided data: supp phi^ meets both half-lines")

            def side(order: float) -> float:
                values = np.abs(k) ** order
                velocity = order * np.abs(k) ** (order - 1)
                times = self.passage_window(grid, spectrum, values, velocity)
                return self.pointwise_time_norm(grid, spectrum, values, np.abs(k) ** ((order - 1) / 2), [x], times)

            expected = float(np.sqrt(l / m))
        elif grid.dimension == 2:
            kx, ky = xi[..., 0], xi[..., 1]
            if np.any(support & (ky == 0)):
                raise FieldError("model equality in 2D needs supp phi^ away from xi_y = 0")

            def side(order: float) -> float:
                speed = np.abs(ky) ** (order - 1)
                values = kx * speed
                times = self.passage_window(grid, spectrum, values, speed, axis=0)
                return self.pointwise_time_norm(
                    grid, spectrum, values, np.abs(ky) ** ((order - 1) / 2), [x, 0.0], times, free_axis=1
                )

            expected = 1.0
        else:
            raise GridError("model equality is defined in one and two dimensions")

        lhs, rhs = side(m), side(l)
        if rhs == 0:
            raise FieldError("reference side vanishes")
        ratio = lhs / rhs
        logger.info(f"model equality l={l:g}, m={m:g}: ratio {ratio:.8g} (expected {expected:.8g})")
        return {"lhs": lhs, "rhs": rhs, "ratio": ratio, "expected": expected}

    def ratio_bound(self, case: ComparisonCase, grid: GridSpec) -> float:
        """A = sup over chi of (|sigma|/|f'|^{1/2})(|g'|^{1/2}/|tau|), after checking monotonicity"""
        if grid.dimension != 1:
            raise GridError("comparison cases are one-dimensional")
        xi = self.spectral.frequency_mesh(grid)
        k = xi[..., 0]
        chi = case.chi(k)
        if not np.any(chi):
            raise HypothesisError(f"support {case.support} holds no lattice point")
        for name, symbol in (("f", case.f), ("g", case.g)):
            derivative = symbol.gradient(xi)[..., 0][chi]
            if np.any(derivative == 0) or np.any(np.sign(derivative) != np.sign(derivative[0])):
                bad = k[chi][np.flatnonzero((derivative == 0) | (np.sign(derivative) != np.sign(derivative[0])))[0]]
                raise HypothesisError(f"{name} is not strictly monotone on {case.support} (near xi={bad:.6g})")
        sigma = np.abs(case.sigma(k[chi]))
        tau = np.abs(case.tau(k[chi]))
        fprime = np.abs(case.f.gradient(xi)[..., 0][chi])
        gprime = np.abs(case.g.gradient(xi)[..., 0][chi])
        if np.any((tau == 0) & (sigma > 0)):
            raise HypothesisError("tau vanishes where sigma does not; no finite ratio bound")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(sigma > 0, sigma / np.sqrt(fprime) * np.sqrt(gprime) / tau, 0.0)
        return float(np.max(ratios))

    def compare_radial(
        self,
        case: ComparisonCase,
        phi: ComplexField,
        x_samples: Sequence[float],
        x_tilde: Optional[Sequence[float]] = None,
        rtol: float = 1e-6,
    ) -> Dict[str, Any]:
        """||chi sigma e^{itf} phi(x)|| against A ||chi tau e^{itg} phi(x~)|| at each sample"""
        grid = phi.grid
        A = self.ratio_bound(case, grid)
        tilde = list(x_samples) if x_tilde is None else list(x_tilde)
        if len(tilde) != len(x_samples):
            raise HypothesisError("x_tilde must pair one point with each sample")
        spectrum = self.spectral.to_frequency(phi).values
        xi = self.spectral.frequency_mesh(grid)
        k = xi[..., 0]
        chi = case.chi(k).astype(float)

        def side(symbol: Symbol, smoother: Profile, points: Sequence[float]):
            values = self.spectral.symbol_values(grid, symbol)
            velocity = symbol.gradient(xi)[..., 0]
            multiplier = chi * smoother(k)
            times = self.passage_window(grid, spectrum * chi, values, velocity)
            return [self.pointwise_time_norm(grid, spectrum, values, multiplier, [p], times) for p in points]

        lhs = side(case.f, case.sigma, x_samples)
        rhs = side(case.g, case.tau, tilde)
        quotients = [left / right if right > 0 else (0.0 if left == 0 else float("inf")) for left, right in zip(lhs, rhs)]
        worst = float(max(quotients))
        holds = worst <= A * (1 + rtol)
        if not holds:
            logger.warning(f"comparison {case.label}: quotient {worst:.8g} exceeds A={A:.8g}")
        return {"A": A, "worst": worst, "holds": holds, "quotients": quotients, "lhs": lhs, "rhs": rhs}

    def secondary_comparison_check(
        self,
        f: Symbol,
        sigma: Profile,
        support: Tuple[float, float],
        s: float,
        phi: ComplexField,
        T: float,
        time_samples: int = 64,
    ) -> Dict[str, float]:
        """A = sup_chi |sigma(rho)|/|f'|^{1/2} and the smoothing ratio of <x>^{-s} chi sigma(D) e^{itf(D)}"""
        grid = phi.grid
        xi = self.spectral.frequency_mesh(grid)
        rho = np.linalg.norm(xi, axis=-1)
        lo, hi = support
        chi = (rho >= lo) & (rho <= hi)
        values = np.where(chi, sigma(rho), 0.0)
        slope = np.linalg.norm(f.gradient(xi), axis=-1)
        active = chi & (np.abs(values) > 0)
        if np.any(active & (slope == 0)):
            bad = rho[active & (slope == 0)][0]
            raise HypothesisError(f"|f'| vanishes at rho={bad:.6g} where sigma does not")
        A = float(np.max(np.abs(values[active]) / np.sqrt(slope[active]))) if np.any(active) else 0.0
        spec = EstimateSpec(
            weight=WeightSpec(kind="bracket", parameter=s),
            smoother=SmootherSpec(kind="unit"),
            T=T,
            time_samples=time_samples,
        )
        ratio = self.estimator.smoothing_ratio(f, spec, phi, extra_multiplier=values)
        logger.info(f"secondary comparison for {f.name}: A={A:.6g}, ratio={ratio:.6g}")
        return {"A": A, "ratio": ratio}


def get_comparison_service() -> ComparisonService:
    return ComparisonService()
