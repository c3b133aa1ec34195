import os
import hashlib
import logging
from dataclasses import dataclass
from multiprocessing.pool import ThreadPool
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from ..errors import ConfigError, FieldError, HypothesisError
from ..models.fields import ComplexField
from ..models.schemas import ConstantEstimate, EstimateSpec, GridSpec, SmootherSpec
from ..models.symbols import Symbol
from ..models.time_coefficients import TimeCoefficient
from .multipliers import smoother_on_lattice, weight_on_grid
from .spectral_service import SpectralService, SupportPredicate, band_support

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int, str], None]


def member_seed(master: int, index: int) -> int:
    """Stable per-member seed derived from (master seed, member index)"""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def ordered_map(func: Callable, items: Sequence, workers: int) -> List:
    """Map over a thread pool; results come back in input order whatever the worker count"""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPool(workers) as pool:
        return pool.map(func, items)


def trapezoid_weights(start: float, end: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    times = np.linspace(start, end, count)
    weights = np.full(count, (end - start) / (count - 1))
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return times, weights


@dataclass(frozen=True)
class _Problem:
    """Everything the time loop needs, sampled once per (symbol, spec, grid)"""

    grid: GridSpec
    symbol_values: np.ndarray
    sigma: np.ndarray
    weight_squared: np.ndarray


class EstimatorService:
    """Weighted space-time norms of e^{ita(D)} phi and estimates of the best smoothing constant"""

    def __init__(self, spectral_service: Optional[SpectralService] = None, workers: Optional[int] = None):
        self.spectral = spectral_service or SpectralService()
        self.workers = workers if workers is not None else int(os.getenv("LAB_THREADS", "1"))
        self.max_iterations = int(os.getenv("LAB_POWER_MAX_ITER", "200"))
        self.tolerance = float(os.getenv("LAB_POWER_TOL", "1e-8"))
        self.ensemble_size = int(os.getenv("LAB_ENSEMBLE_SIZE", "64"))
        self.concentration_window = float(os.getenv("LAB_CONCENTRATION_WINDOW", "8.0"))
        self.window_fraction = float(os.getenv("LAB_WINDOW_FRACTION", "0.45"))
        logger.info(f"Estimator service initialized (workers: {self.workers})")

    # -- plumbing ------------------------------------------------------------

    def _map(self, func: Callable, items: Sequence, parallel: bool = True) -> List:
        return ordered_map(func, items, self.workers if parallel else 1)

    def prepare(
        self,
        a: Symbol,
        spec: EstimateSpec,
        grid: GridSpec,
        extra_multiplier: Optional[np.ndarray] = None,
    ) -> _Problem:
        if a.dimension != grid.dimension:
            raise ConfigError(f"symbol dimension {a.dimension} does not match grid dimension {grid.dimension}")
        xi = self.spectral.frequency_mesh(grid)
        values = self.spectral.symbol_values(grid, a)
        gradient = a.gradient(xi) if spec.smoother.kind in ("invariant_power", "invariant_bracket") else None
        sigma = smoother_on_lattice(spec.smoother, xi, a, gradient=gradient, values=values)
        if extra_multiplier is not None:
            sigma = sigma * extra_multiplier
        if not np.all(np.isfinite(sigma)):
            index = tuple(np.argwhere(~np.isfinite(sigma))[0])
            raise FieldError(f"smoother {spec.smoother.label()} is not finite at xi={xi[index].tolist()}")
        weight = weight_on_grid(spec.weight, grid, self.spectral.physical_mesh(grid))
        in_range = spec.weight.in_admissible_range(a.order, a.dimension)
        if in_range is False:
            logger.warning(f"weight {spec.weight.label()} with m={a.order:g}, n={a.dimension} is outside the admissible range")
        return _Problem(grid=grid, symbol_values=values, sigma=sigma, weight_squared=weight ** 2)

    def _frame_energy(self, problem: _Problem, spectrum: np.ndarray, t: float) -> float:
        phase = np.exp(1j * t * problem.symbol_values)
        u = self.spectral.inverse_values(problem.sigma * phase * spectrum, problem.grid)
        return float(problem.grid.cell_volume * np.sum(problem.weight_squared * np.abs(u) ** 2))

    def window_energies(
        self,
        problem: _Problem,
        spectrum: np.ndarray,
        times: np.ndarray,
        parallel: bool = True,
    ) -> np.ndarray:
        return np.array(self._map(lambda t: self._frame_energy(problem, spectrum, t), list(times), parallel))

    # -- norms ---------------------------------------------------------------

    def spacetime_norm(
        self,
        a: Symbol,
        spec: EstimateSpec,
        phi: ComplexField,
        interval: Optional[Tuple[float, float]] = None,
        extra_multiplier: Optional[np.ndarray] = None,
        parallel: bool = True,
    ) -> float:
        """||w sigma(D) e^{ita(D)} phi|| over t in [-T, T] (or `interval`) by the trapezoid rule"""
        if phi.norm() == 0:
            raise FieldError("spacetime_norm needs a nonzero field")
        problem = self.prepare(a, spec, phi.grid, extra_multiplier)
        start, end = interval if interval is not None else (-spec.T, spec.T)
        return self._window_norm(problem, self.spectral.to_frequency(phi).values, start, end, spec.time_samples, parallel)

    def _window_norm(self, problem: _Problem, spectrum: np.ndarray, start: float, end: float, count: int, parallel: bool = True) -> float:
        times = np.linspace(start, end, count)
        energies = self.window_energies(problem, spectrum, times, parallel)
        return float(np.sqrt(abs(trapezoid(energies, times))))

    def smoothing_ratio(self, a: Symbol, spec: EstimateSpec, phi: ComplexField, **kwargs) -> float:
        norm = phi.norm()
        if norm == 0:
            raise FieldError("smoothing ratio is undefined for the zero field")
        return self.spacetime_norm(a, spec, phi, **kwargs) / norm

    # -- the operator K -------------------------------------------------------

    def _apply_operator(self, problem: _Problem, times: np.ndarray, weights: np.ndarray, mask: np.ndarray, v: np.ndarray) -> np.ndarray:
        """K v = sum_t w_t e^{-ita} conj(sigma) F W^2 F^{-1} sigma e^{ita} v, restricted to the support"""
        grid = problem.grid

        def frame(t: float) -> np.ndarray:
            phase = np.exp(1j * t * problem.symbol_values)
            u = self.spectral.inverse_values(problem.sigma * phase * v, grid)
            return np.conj(phase) * np.conj(problem.sigma) * self.spectral.forward_values(problem.weight_squared * u, grid)

        terms = self._map(frame, list(times))
        result = np.zeros(grid.shape, dtype=complex)
        for weight, term in zip(weights, terms):
            result += weight * term
        return np.where(mask, result, 0.0)

    def smoothing_operator(
        self,
        a: Symbol,
        spec: EstimateSpec,
        grid: GridSpec,
        support: Optional[SupportPredicate] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Dense matrix of K on the supported modes (for small grids) and the flat indices of those modes"""
        problem = self.prepare(a, spec, grid)
        mask = self.spectral.support_mask(grid, support)
        times, weights = trapezoid_weights(-spec.T, spec.T, spec.time_samples)
        indices = np.flatnonzero(mask)
        matrix = np.empty((len(indices), len(indices)), dtype=complex)
        for column, index in enumerate(indices):
            e = np.zeros(grid.size, dtype=complex)
            e[index] = 1.0
            Ke = self._apply_operator(problem, times, weights, mask, e.reshape(grid.shape))
            matrix[:, column] = Ke.reshape(-1)[indices]
        return matrix, indices

    def _power_iteration(
        self,
        a: Symbol,
        spec: EstimateSpec,
        grid: GridSpec,
        support: Optional[SupportPredicate],
        seed: int,
        max_iterations: int,
        tolerance: float,
    ) -> ConstantEstimate:
        problem = self.prepare(a, spec, grid)
        mask = self.spectral.support_mask(grid, support)
        times, weights = trapezoid_weights(-spec.T, spec.T, spec.time_samples)
        start = self.spectral.random_band_limited(grid, support, seed)
        v = np.where(mask, self.spectral.forward_values(start.values, grid), 0.0)
        v = v / np.linalg.norm(v)

        history: List[float] = []
        converged = False
        Kv = self._apply_operator(problem, times, weights, mask, v)
        for iteration in range(1, max_iterations + 1):
            rayleigh = float(np.real(np.vdot(v, Kv)))
            history.append(rayleigh)
            size = np.linalg.norm(Kv)
            if size == 0:
                converged = True
                break
            if len(history) > 1 and abs(history[-1] - history[-2]) <= tolerance * abs(history[-1]):
                converged = True
                break
            if iteration == max_iterations:
                break
            v = Kv / size
            Kv = self._apply_operator(problem, times, weights, mask, v)

        rayleigh = history[-1]
        size = np.linalg.norm(Kv)
        residual = float(np.linalg.norm(Kv - rayleigh * v) / size) if size > 0 else 0.0
        fingerprint = hashlib.sha256(np.ascontiguousarray(v).tobytes()).hexdigest()[:16]
        if not converged:
            logger.warning(f"power iteration for {a.name} stopped after {len(history)} iterations (residual {residual:.3g})")
        else:
            logger.info(f"power iteration for {a.name} converged in {len(history)} iterations")
        return ConstantEstimate(
            value=float(np.sqrt(max(rayleigh, 0.0))),
            method="power_iteration",
            iterations=len(history),
            residual=residual,
            fingerprint=fingerprint,
            converged=converged,
            history=history,
        )

    def _ensemble(
        self,
        a: Symbol,
        spec: EstimateSpec,
        grid: GridSpec,
        support: Optional[SupportPredicate],
        seed: int,
        size: int,
    ) -> ConstantEstimate:
        problem = self.prepare(a, spec, grid)
        seeds = [member_seed(seed, index) for index in range(size)]

        def ratio(member: int) -> float:
            phi = self.spectral.random_band_limited(grid, support, member)
            spectrum = self.spectral.forward_values(phi.values, grid)
            return self._window_norm(problem, spectrum, -spec.T, spec.T, spec.time_samples, parallel=False) / phi.norm()

        ratios = self._map(ratio, seeds)
        best = int(np.argmax(ratios))
        return ConstantEstimate(
            value=float(ratios[best]),
            method="ensemble",
            iterations=size,
            residual=0.0,
            fingerprint=str(seeds[best]),
            converged=True,
            history=[float(r) for r in ratios],
        )

    def estimate_constant(
        self,
        a: Symbol,
        spec: EstimateSpec,
        grid: GridSpec,
        method: str = "power_iteration",
        seed: int = 0,
        support: Optional[SupportPredicate] = None,
        ensemble_size: Optional[int] = None,
        max_iterations: Optional[int] = None,
        tolerance: Optional[float] = None,
    ) -> ConstantEstimate:
        """Best constant C in ||w sigma e^{ita} phi|| <= C ||phi|| over fields supported where `support` holds"""
        if method == "power_iteration":
            return self._power_iteration(
                a, spec, grid, support, seed,
                max_iterations or self.max_iterations,
                self.tolerance if tolerance is None else tolerance,
            )
        if method == "ensemble":
            return self._ensemble(a, spec, grid, support, seed, ensemble_size or self.ensemble_size)
        raise ConfigError(f"unknown estimation method '{method}'")

    # -- studies -------------------------------------------------------------

    def refinement_study(
        self,
        a: Symbol,
        spec: EstimateSpec,
        grids: Sequence[GridSpec],
        method: str = "power_iteration",
        seed: int = 0,
        band_limit: Optional[float] = None,
        progress_callback: Optional[ProgressCallback] = None,
    ) -> List[Dict[str, Any]]:
        """One constant per grid with the frequency band and the seed held fixed"""
        if not grids:
            raise ConfigError("refinement study needs at least one grid")
        sizes = [g.size for g in grids]
        if sizes != sorted(sizes):
            logger.warning("refinement ladder is not ordered by grid size")
        if band_limit is None:
            band_limit = 0.5 * min(min(g.nyquist) for g in grids)
        support = band_support(band_limit, exclude_origin=spec.smoother.exponent < 0)

        rows = []
        for index, grid in enumerate(grids):
            if progress_callback:
                progress_callback(index, len(grids), f"grid {grid.label()}")
            estimate = self.estimate_constant(a, spec, grid, method=method, seed=seed, support=support)
            logger.info(f"refinement {grid.label()}: constant {estimate.value:.6g}")
            rows.append(
                {
                    "grid": grid.label(),
                    "N": grid.points[0],
                    "L": grid.lengths[0],
                    "band_limit": band_limit,
                    "constant": estimate.value,
                    "iterations": estimate.iterations,
                    "residual": estimate.residual,
                    "converged": estimate.converged,
                }
            )
        if progress_callback:
            progress_callback(len(grids), len(grids), "refinement complete")
        return rows

    def concentration_study(
        self,
        a: Symbol,
        specs: Dict[str, EstimateSpec],
        widths: Sequence[float],
        center: Union[float, Sequence[float], Callable[[np.ndarray], np.ndarray]],
        grid: GridSpec,
        seed: int = 0,
        method: str = "power_iteration",
        ensemble_size: int = 16,
        progress_callback: Optional[ProgressCallback] = None,
        window_scale: Optional[float] = None,
    ) -> Dict[str, Any]:
        """Classical and invariant ratios for fields concentrating on a frequency set.

        `center` is a sphere radius, a point, or a distance function on the lattice.
        Ensembles report the root-mean-square ratio; power iteration reports the
        band-restricted constant.

        Group velocities in a w-neighborhood of a critical set are O(w), so each width
        gets the half-window max(T, window_scale / (w * g_w)) with g_w the largest
        |grad a| on the band, capped below the wrap-around time of the torus.
        A window_scale of 0 keeps the specs' T for every width.
        """
        if set(specs) != {"classical", "invariant"}:
            raise ConfigError("concentration study needs exactly the specs 'classical' and 'invariant'")
        if not widths:
            raise ConfigError("concentration study needs at least one width")
        distance = _distance_function(center)
        xi = self.spectral.frequency_mesh(grid)
        sigma = {
            key: smoother_on_lattice(spec.smoother, xi, a) for key, spec in specs.items()
        }

        rows, skipped = [], []
        for index, width in enumerate(widths):
            if progress_callback:
                progress_callback(index, len(widths), f"width {width:g}")

            def support(points: np.ndarray, w: float = width) -> np.ndarray:
                return (distance(points) < w) & (np.linalg.norm(points, axis=-1) > 0)

            mask = self.spectral.support_mask(grid, support)
            if not np.any(mask):
                logger.warning(f"concentration width {width:g}: no lattice mode within reach, skipped")
                skipped.append(float(width))
                continue
            window = self._concentration_window(a, xi[mask], width, grid, window_scale)
            ratios = {}
            for key, spec in specs.items():
                spec = spec.model_copy(update={"T": max(spec.T, window)})
                if method == "power_iteration":
                    ratios[key] = self.estimate_constant(a, spec, grid, "power_iteration", seed, support).value
                else:
                    estimate = self.estimate_constant(a, spec, grid, "ensemble", seed, support, ensemble_size=ensemble_size)
                    ratios[key] = float(np.sqrt(np.mean(np.square(estimate.history))))
            multiplier = float(np.sqrt(np.sum(sigma["classical"][mask] ** 2) / np.sum(sigma["invariant"][mask] ** 2)))
            rows.append(
                {
                    "width": float(width),
                    "modes": int(np.sum(mask)),
                    "T": max(max(spec.T for spec in specs.values()), window),
                    "ratio_classical": ratios["classical"],
                    "ratio_invariant": ratios["invariant"],
                    "quotient": ratios["classical"] / ratios["invariant"],
                    "multiplier_quotient": multiplier,
                }
            )
            logger.info(f"concentration width {width:g}: quotient {rows[-1]['quotient']:.6g}")

        slope = None
        if len(rows) >= 2:
            w = np.log([r["width"] for r in rows])
            q = np.log([r["quotient"] for r in rows])
            slope = float(np.polyfit(w, q, 1)[0])
        invariant = [r["ratio_invariant"] for r in rows]
        spread = float(max(invariant) / min(invariant) - 1.0) if invariant and min(invariant) > 0 else None
        if progress_callback:
            progress_callback(len(widths), len(widths), "concentration complete")
        return {"rows": rows, "slope": slope, "invariant_spread": spread, "skipped": skipped, "method": method}

    def _concentration_window(
        self, a: Symbol, band: np.ndarray, width: float, grid: GridSpec, window_scale: Optional[float]
    ) -> float:
        scale = self.concentration_window if window_scale is None else window_scale
        speed = float(np.max(np.linalg.norm(a.gradient(band), axis=-1)))
        if scale <= 0 or speed <= 0:
            return 0.0
        window = scale / (width * speed)
        cap = self.window_fraction * min(grid.lengths) / speed
        if window > cap:
            logger.warning(f"concentration width {width:g}: half-window {window:.4g} capped at {cap:.4g}")
            window = cap
        logger.debug(f"concentration width {width:g}: half-window {window:.4g} (max |grad a| {speed:.4g})")
        return window

    def hoshiro_comparison(
        self,
        a: Symbol,
        spec: EstimateSpec,
        grid: GridSpec,
        seed: int = 0,
        band_limit: Optional[float] = None,
    ) -> Dict[str, Any]:
        """Hoshiro constant against m^{-1/2} times the invariant constant, same weight and window"""
        if not a.is_homogeneous or a.order < 1:
            raise HypothesisError(f"{a.name} must be positively homogeneous of order >= 1")
        limit = band_limit if band_limit is not None else 0.5 * min(grid.nyquist)
        support = band_support(limit, exclude_origin=True)
        hoshiro_spec = spec.model_copy(update={"smoother": SmootherSpec(kind="hoshiro", exponent=max(spec.smoother.exponent, 0.5))})
        invariant_spec = spec.model_copy(update={"smoother": SmootherSpec(kind="invariant_power", exponent=0.5)})
        hoshiro = self.estimate_constant(a, hoshiro_spec, grid, seed=seed, support=support)
        invariant = self.estimate_constant(a, invariant_spec, grid, seed=seed, support=support)
        bound = invariant.value / np.sqrt(a.order)
        return {
            "hoshiro": hoshiro.value,
            "invariant": invariant.value,
            "bound": float(bound),
            "dominated": bool(hoshiro.value <= bound * (1 + 1e-6)),
            "converged": hoshiro.converged and invariant.converged,
        }

    # -- time-dependent coefficients ------------------------------------------

    def timedep_norm(
        self,
        a: Symbol,
        c: TimeCoefficient,
        spec: EstimateSpec,
        phi: ComplexField,
        sampling: str = "reparametrized",
    ) -> float:
        """||w |c(t)|^{1/2} sigma(D) e^{iC(t)a(D)} phi|| over t in [alpha, beta].

        `reparametrized` integrates in tau = C(t) on C-equispaced nodes, which is the
        exact substitution; `direct` samples t uniformly with the |c(t)| factor.
        """
        if phi.norm() == 0:
            raise FieldError("timedep_norm needs a nonzero field")
        problem = self.prepare(a, spec, phi.grid)
        spectrum = self.spectral.to_frequency(phi).values
        if sampling == "reparametrized":
            start, end = c.tau_interval()
            return self._window_norm(problem, spectrum, start, end, spec.time_samples)
        if sampling == "direct":
            times = np.linspace(c.alpha, c.beta, spec.time_samples)
            taus = np.array([c.primitive(t) for t in times])
            energies = self.window_energies(problem, spectrum, taus) * np.abs(c(times))
            return float(np.sqrt(trapezoid(energies, times)))
        raise ConfigError(f"unknown sampling '{sampling}'")

    def timedep_nodes(self, c: TimeCoefficient, count: int) -> np.ndarray:
        """Times t_j = C^{-1}(tau_j) for tau_j equispaced over C([alpha, beta])"""
        start, end = c.tau_interval()
        return np.array([c.inverse_primitive(tau) for tau in np.linspace(start, end, count)])


def _distance_function(center) -> Callable[[np.ndarray], np.ndarray]:
    if callable(center):
        return center
    if np.isscalar(center):
        radius = float(center)
        return lambda xi: np.abs(np.linalg.norm(xi, axis=-1) - radius)
    point = np.asarray(center, dtype=float)
    return lambda xi: np.linalg.norm(xi - point, axis=-1)


def get_estimator_service() -> EstimatorService:
    return EstimatorService()
