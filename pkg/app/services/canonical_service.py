import os
import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy.fft
from scipy import ndimage

from ..errors import HypothesisError, NyquistError, SupportError
from ..models.fields import ComplexField
from ..models.frequency_maps import CutoffSpec, FrequencyMap, LinearMap, RadialWarp
from ..models.schemas import EstimateSpec, GridSpec, SmootherSpec, WeightSpec
from ..models.symbols import ComposedSymbol, Symbol
from .estimator_service import EstimatorService, member_seed, ordered_map
from .multipliers import smoother_on_lattice, weight_on_grid
from .spectral_service import SpectralService
from .symbol_service import SymbolService

logger = logging.getLogger(__name__)

Q_FLAG = 1e6


class CanonicalService:
    """Frequency-side changes of variables I u = F^{-1}[gamma(xi) F u(psi(xi))] and the invariance checks built on them"""

    def __init__(
        self,
        spectral_service: Optional[SpectralService] = None,
        estimator_service: Optional[EstimatorService] = None,
        symbol_service: Optional[SymbolService] = None,
    ):
        self.spectral = spectral_service or SpectralService()
        self.estimator = estimator_service or EstimatorService(self.spectral)
        self.symbols = symbol_service or SymbolService()
        self.workers = int(os.getenv("LAB_THREADS", "1"))
        self.interpolation_order = int(os.getenv("LAB_INTERPOLATION_ORDER", "3"))
        logger.info("Canonical service initialized")

    # -- resampling ----------------------------------------------------------

    def _resample(self, spectrum: np.ndarray, grid: GridSpec, points: np.ndarray, mask: np.ndarray, lattice_matrix) -> np.ndarray:
        """Values of the spectrum at `points` (one per lattice site) where `mask` holds"""
        out = np.zeros(grid.shape, dtype=complex)
        if not np.any(mask):
            return out
        half = np.array(grid.points) // 2
        if lattice_matrix is not None:
            k = self.spectral.wavenumbers(grid)[mask]
            image = k @ lattice_matrix.T
            outside = np.any((image < -half) | (image >= half), axis=-1)
            if np.any(outside):
                raise NyquistError(f"image wavenumber {image[outside][0].tolist()} lies outside the lattice box")
            out[mask] = spectrum[tuple((image % np.array(grid.points)).T)]
            return out

        eta = points[mask]
        nyquist = np.array(grid.nyquist)
        outside = np.any(np.abs(eta) > nyquist * (1 + 1e-12), axis=-1)
        if np.any(outside):
            raise NyquistError(f"image point {eta[outside][0].tolist()} lies outside the Nyquist box")
        lengths = np.array(grid.lengths)
        coordinates = (eta * lengths / (2 * np.pi) + half).T
        shifted = scipy.fft.fftshift(spectrum)
        real = ndimage.map_coordinates(shifted.real, coordinates, order=self.interpolation_order, mode="constant", cval=0.0)
        imag = ndimage.map_coordinates(shifted.imag, coordinates, order=self.interpolation_order, mode="constant", cval=0.0)
        out[mask] = real + 1j * imag
        return out

    def _lattice_matrix(self, psi: FrequencyMap, grid: GridSpec, use_inverse: bool):
        if isinstance(psi, LinearMap):
            return psi.lattice_matrix(grid.lengths, use_inverse=use_inverse)
        return None

    def apply_I(self, psi: FrequencyMap, gamma: CutoffSpec, u: ComplexField) -> ComplexField:
        """(I u)^(xi) = gamma(xi) u^(psi(xi))"""
        grid = u.grid
        xi = self.spectral.frequency_mesh(grid)
        weights = gamma.evaluate(xi)
        mask = weights > 0
        spectrum = self.spectral.to_frequency(u).values
        values = self._resample(spectrum, grid, psi.forward(xi), mask, self._lattice_matrix(psi, grid, False))
        return ComplexField(grid, self.spectral.inverse_values(weights * values, grid))

    def apply_I_inverse(self, psi: FrequencyMap, gamma: CutoffSpec, u: ComplexField) -> ComplexField:
        """(I^{-1} u)^(xi) = gamma~(xi) u^(psi^{-1}(xi)) with gamma~ = gamma o psi^{-1}"""
        grid = u.grid
        xi = self.spectral.frequency_mesh(grid)
        weights = gamma.induced(psi)(xi)
        mask = weights > 0
        spectrum = self.spectral.to_frequency(u).values
        values = self._resample(spectrum, grid, psi.inverse(xi), mask, self._lattice_matrix(psi, grid, True))
        return ComplexField(grid, self.spectral.inverse_values(weights * values, grid))

    # -- boundedness ---------------------------------------------------------

    def guarantee(self, psi: FrequencyMap, gamma: CutoffSpec, kappa: float) -> Optional[str]:
        if gamma.is_compact and (psi.is_linear or isinstance(psi, RadialWarp)):
            return "bounded-derivatives"
        if psi.is_homogeneous and gamma.is_homogeneous and abs(kappa) < psi.dimension / 2:
            return "homogeneous-weighted"
        return None

    def boundedness_probe(
        self,
        psi: FrequencyMap,
        gamma: CutoffSpec,
        kappa: float,
        grid: GridSpec,
        ensemble_size: int = 16,
        seed: int = 0,
        band_limit: Optional[float] = None,
    ) -> Dict[str, Any]:
        """max over random fields of ||<x>^kappa I u|| / ||<x>^kappa u||"""
        x = self.spectral.physical_mesh(grid)
        weight = weight_on_grid(WeightSpec(kind="bracket", parameter=-kappa), grid, x)
        limit = band_limit if band_limit is not None else 0.5 * min(grid.nyquist)

        def support(xi: np.ndarray) -> np.ndarray:
            return np.linalg.norm(xi, axis=-1) <= limit

        def ratio(index: int) -> float:
            u = self.spectral.random_band_limited(grid, support, member_seed(seed, index))
            image = self.apply_I(psi, gamma, u)
            return float(np.linalg.norm(weight * image.values) / np.linalg.norm(weight * u.values))

        ratios = ordered_map(ratio, list(range(ensemble_size)), self.workers)
        window = psi.determinant_window(self.spectral.frequency_lattice(grid)[gamma.evaluate(self.spectral.frequency_lattice(grid)) > 0])
        flag = self.guarantee(psi, gamma, kappa)
        result = {
            "norm": float(max(ratios)),
            "ratios": ratios,
            "ensemble": ensemble_size,
            "determinant_window": window,
            "guarantee": flag,
        }
        logger.info(f"boundedness probe {psi.label}/{gamma.label()} kappa={kappa:g}: {result['norm']:.6g}")
        return result

    def operator_norm_dense(self, psi: FrequencyMap, gamma: CutoffSpec, kappa: float, grid: GridSpec) -> float:
        """Largest singular value of <x>^kappa I <x>^{-kappa} assembled column by column"""
        x = self.spectral.physical_mesh(grid)
        weight = weight_on_grid(WeightSpec(kind="bracket", parameter=-kappa), grid, x).reshape(-1)
        columns = []
        for j in range(grid.size):
            e = np.zeros(grid.size, dtype=complex)
            e[j] = 1.0 / weight[j]
            image = self.apply_I(psi, gamma, ComplexField(grid, e.reshape(grid.shape)))
            columns.append(weight * image.values.reshape(-1))
        matrix = np.stack(columns, axis=1)
        return float(np.linalg.norm(matrix, 2))

    # -- invariance ----------------------------------------------------------

    def _specs(self, weight: WeightSpec, smoother: SmootherSpec, T: float, time_samples: int) -> EstimateSpec:
        return EstimateSpec(weight=weight, smoother=smoother, T=T, time_samples=time_samples)

    def q_sup(self, sigma: Symbol, psi: FrequencyMap, gamma: CutoffSpec, smoother: SmootherSpec, grid: GridSpec) -> float:
        """sup over supp gamma of |gamma zeta(|grad a|) / zeta(|grad sigma|) o psi|"""
        xi = self.spectral.frequency_mesh(grid)
        weights = gamma.evaluate(xi)
        mask = weights > 0
        a = ComposedSymbol(sigma, psi)
        numerator = weights[mask] * smoother_on_lattice(smoother, xi[mask], a)
        denominator = smoother_on_lattice(smoother, psi.forward(xi[mask]), sigma)
        if np.any((denominator == 0) & (numerator != 0)):
            return float("inf")
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(numerator == 0, 0.0, np.abs(numerator) / np.abs(denominator))
        return float(np.max(q, initial=0.0))

    def equivalence_check(
        self,
        sigma: Symbol,
        psi: FrequencyMap,
        gamma: CutoffSpec,
        smoother: SmootherSpec,
        weight: WeightSpec,
        phi: ComplexField,
        T: float,
        time_samples: int = 64,
    ) -> Dict[str, Any]:
        """lhs = ||w zeta(|grad a|) e^{ita} phi||, rhs = ||w zeta(|grad sigma|) e^{it sigma} I^{-1} phi|| for a = sigma o psi"""
        grid = phi.grid
        spectrum = self.spectral.to_frequency(phi).values
        xi = self.spectral.frequency_mesh(grid)
        outside = (np.abs(spectrum) > 1e-12 * np.max(np.abs(spectrum))) & (gamma.evaluate(xi) == 0)
        if np.any(outside):
            raise SupportError(f"supp phi^ leaves supp gamma at xi={xi[outside][0].tolist()}")
        a = ComposedSymbol(sigma, psi)
        spec = self._specs(weight, smoother, T, time_samples)
        lhs = self.estimator.spacetime_norm(a, spec, phi)
        pulled = self.apply_I_inverse(psi, gamma, phi)
        rhs = self.estimator.spacetime_norm(sigma, spec, pulled)
        q = self.q_sup(sigma, psi, gamma, smoother, grid)
        if q > Q_FLAG:
            logger.warning(f"sup|q| = {q:.3g} exceeds {Q_FLAG:g} for {psi.label}")
        return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else float("inf"), "q_sup": q, "flagged": q > Q_FLAG}

    def equivalence_study(
        self,
        sigma: Symbol,
        psi: FrequencyMap,
        gamma: CutoffSpec,
        smoother: SmootherSpec,
        weight: WeightSpec,
        grid: GridSpec,
        T: float,
        time_samples: int = 64,
        ensemble_size: int = 16,
        seed: int = 0,
    ) -> Dict[str, Any]:
        """Equivalence ratios over random fields supported where gamma = 1; band B = max(max r, 1/min r)"""

        def support(xi: np.ndarray) -> np.ndarray:
            return (gamma.evaluate(xi) >= 1.0 - 1e-12) & (np.linalg.norm(xi, axis=-1) > 0)

        def run(index: int) -> Dict[str, Any]:
            phi = self.spectral.random_band_limited(grid, support, member_seed(seed, index))
            return self.equivalence_check(sigma, psi, gamma, smoother, weight, phi, T, time_samples)

        results = [run(index) for index in range(ensemble_size)]
        ratios = [r["ratio"] for r in results]
        band = float(max(max(ratios), 1.0 / min(ratios)))
        q = results[0]["q_sup"]
        logger.info(f"equivalence study {sigma.name} under {psi.label}: band {band:.6g}")
        return {"ratios": ratios, "band": band, "q_sup": q, "flagged": q > Q_FLAG}

    def rank_invariance_check(
        self,
        sigma: Symbol,
        psi: FrequencyMap,
        critical_points: Optional[Sequence[Sequence[float]]] = None,
    ) -> List[Dict[str, Any]]:
        """rank of Hess a at each critical point of a = sigma o psi against rank of Hess sigma at its image"""
        if not isinstance(psi, LinearMap):
            raise HypothesisError("rank invariance is checked for linear maps")
        a = ComposedSymbol(sigma, psi)
        if critical_points is None:
            critical_points = [c.point for c in self.symbols.find_critical_points(a)]
        rows = []
        for point in critical_points:
            point = np.asarray(point, dtype=float)
            rank_a, _ = self.symbols.hessian_rank(a, point)
            rank_sigma, _ = self.symbols.hessian_rank(sigma, psi.forward(point))
            rows.append({"point": point.tolist(), "rank_a": rank_a, "rank_sigma": rank_sigma, "equal": rank_a == rank_sigma})
        mismatched = [r for r in rows if not r["equal"]]
        if mismatched:
            logger.warning(f"rank mismatch at {len(mismatched)} of {len(rows)} critical points")
        return rows


def get_canonical_service() -> CanonicalService:
    return CanonicalService()
