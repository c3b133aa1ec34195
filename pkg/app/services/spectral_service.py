import os
import logging
from functools import lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np
import scipy.fft

from ..errors import FieldError, NyquistError, SupportError, SymbolError
from ..models.fields import ComplexField
from ..models.schemas import BandSpec, GridSpec

logger = logging.getLogger(__name__)

Multiplier = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]
SupportPredicate = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=32)
def _frequency_axes(grid: GridSpec) -> Tuple[np.ndarray, ...]:
    # fftfreq puts the Nyquist index at -N/2
    return tuple(2 * np.pi * scipy.fft.fftfreq(N, d=L / N) for L, N in zip(grid.lengths, grid.points))


@lru_cache(maxsize=32)
def _frequency_mesh(grid: GridSpec) -> np.ndarray:
    axes = np.meshgrid(*_frequency_axes(grid), indexing="ij")
    mesh = np.stack(axes, axis=-1)
    mesh.setflags(write=False)
    return mesh


@lru_cache(maxsize=32)
def _physical_mesh(grid: GridSpec) -> np.ndarray:
    axes = [-L / 2 + np.arange(N) * (L / N) for L, N in zip(grid.lengths, grid.points)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    mesh.setflags(write=False)
    return mesh


@lru_cache(maxsize=32)
def _wavenumbers(grid: GridSpec) -> np.ndarray:
    axes = [np.rint(scipy.fft.fftfreq(N, d=1.0 / N)).astype(np.int64) for N in grid.points]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    mesh.setflags(write=False)
    return mesh


@lru_cache(maxsize=32)
def _centering_sign(grid: GridSpec) -> np.ndarray:
    # e^{i xi_k L/2} = (-1)^k moves the phase origin from x=-L/2 to x=0
    parity = np.sum(_wavenumbers(grid), axis=-1) % 2
    sign = np.where(parity == 0, 1.0, -1.0)
    sign.setflags(write=False)
    return sign


def band_support(limit: float, exclude_origin: bool = False) -> SupportPredicate:
    """Predicate |xi| <= limit, optionally without the zero mode"""

    def predicate(xi: np.ndarray) -> np.ndarray:
        rho = np.linalg.norm(xi, axis=-1)
        mask = rho <= limit
        if exclude_origin:
            mask &= rho > 0
        return mask

    return predicate


class SpectralService:
    """Periodic-grid Fourier machinery: lattice, unitary transform, multipliers and the exact propagator.

    The forward transform is centered at x = 0,
    F(phi)(xi) = N^{-1/2} sum_j phi(x_j) exp(-i xi . x_j), so resampling in xi
    matches the continuum change of variables.
    """

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers if workers is not None else int(os.getenv("LAB_THREADS", "1"))
        logger.info(f"Spectral service initialized (fft workers: {self.workers})")

    # -- lattice -------------------------------------------------------------

    def frequency_lattice(self, grid: GridSpec) -> np.ndarray:
        """All lattice vectors, FFT-ordered and flattened to shape (prod N_j, n)"""
        return _frequency_mesh(grid).reshape(-1, grid.dimension)

    def frequency_mesh(self, grid: GridSpec) -> np.ndarray:
        return _frequency_mesh(grid)

    def physical_mesh(self, grid: GridSpec) -> np.ndarray:
        return _physical_mesh(grid)

    def wavenumbers(self, grid: GridSpec) -> np.ndarray:
        return _wavenumbers(grid)

    # -- transforms ----------------------------------------------------------

    def transform(self, field: ComplexField, direction: str = "forward") -> ComplexField:
        if direction == "forward":
            if field.space != "physical":
                raise FieldError("forward transform expects a physical-space field")
            return field.with_values(self.forward_values(field.values, field.grid), space="frequency")
        if direction == "inverse":
            if field.space != "frequency":
                raise FieldError("inverse transform expects a frequency-space field")
            return field.with_values(self.inverse_values(field.values, field.grid), space="physical")
        raise FieldError(f"unknown transform direction '{direction}'")

    def forward_values(self, values: np.ndarray, grid: GridSpec) -> np.ndarray:
        if values.shape != grid.shape:
            raise FieldError(f"array of shape {values.shape} does not match grid {grid.shape}")
        return scipy.fft.fftn(values, norm="ortho", workers=self.workers) * _centering_sign(grid)

    def inverse_values(self, values: np.ndarray, grid: GridSpec) -> np.ndarray:
        if values.shape != grid.shape:
            raise FieldError(f"array of shape {values.shape} does not match grid {grid.shape}")
        return scipy.fft.ifftn(values * _centering_sign(grid), norm="ortho", workers=self.workers)

    def to_frequency(self, field: ComplexField) -> ComplexField:
        return field if field.space == "frequency" else self.transform(field, "forward")

    def to_physical(self, field: ComplexField) -> ComplexField:
        return field if field.space == "physical" else self.transform(field, "inverse")

    # -- multipliers ---------------------------------------------------------

    def multiplier_values(self, grid: GridSpec, m: Multiplier) -> np.ndarray:
        xi = _frequency_mesh(grid)
        values = np.asarray(m(xi) if callable(m) else m)
        values = np.broadcast_to(values, grid.shape)
        finite = np.isfinite(values)
        if not np.all(finite):
            index = tuple(np.argwhere(~finite)[0])
            raise FieldError(f"multiplier is not finite at lattice point xi={xi[index].tolist()}")
        return values

    def apply_multiplier(self, field: ComplexField, m: Multiplier) -> ComplexField:
        if field.space != "physical":
            raise FieldError("apply_multiplier expects a physical-space field")
        values = self.multiplier_values(field.grid, m)
        spectrum = self.forward_values(field.values, field.grid)
        return field.with_values(self.inverse_values(values * spectrum, field.grid))

    def symbol_values(self, grid: GridSpec, a) -> np.ndarray:
        """Real values of a symbol on the lattice"""
        values = np.asarray(a.evaluate(_frequency_mesh(grid)))
        if np.iscomplexobj(values):
            if np.max(np.abs(values.imag)) > 0:
                raise SymbolError(f"symbol {a.name} is not real-valued on the lattice")
            values = values.real
        finite = np.isfinite(values)
        if not np.all(finite):
            index = tuple(np.argwhere(~finite)[0])
            raise SymbolError(f"symbol {a.name} is not finite at xi={_frequency_mesh(grid)[index].tolist()}")
        return values

    def propagate(self, field: ComplexField, a, t: float) -> ComplexField:
        """u(t) = exp(i t a(D)) phi, exact in time"""
        if field.space != "physical":
            raise FieldError("propagate expects a physical-space field")
        phase = np.exp(1j * t * self.symbol_values(field.grid, a))
        spectrum = self.forward_values(field.values, field.grid)
        return field.with_values(self.inverse_values(phase * spectrum, field.grid))

    def band_split(self, field: ComplexField, band: BandSpec) -> Tuple[ComplexField, ComplexField]:
        """Smooth split into low (|xi| < 2R) and high (|xi| > R) frequency parts"""
        grid = field.grid
        if 2 * band.radius > min(grid.nyquist):
            raise NyquistError(f"band outer radius {2 * band.radius} exceeds Nyquist {min(grid.nyquist):.6g}")
        rho = np.linalg.norm(_frequency_mesh(grid), axis=-1)
        s = np.clip((rho - band.radius) / band.radius, 0.0, 1.0)
        low = 1.0 - (3 * s ** 2 - 2 * s ** 3)
        spectrum = self.forward_values(field.values, grid)
        low_part = field.with_values(self.inverse_values(low * spectrum, grid))
        high_part = field.with_values(self.inverse_values((1.0 - low) * spectrum, grid))
        return low_part, high_part

    # -- test data -----------------------------------------------------------

    def support_mask(self, grid: GridSpec, support: Optional[SupportPredicate]) -> np.ndarray:
        if support is None:
            return np.ones(grid.shape, dtype=bool)
        mask = np.broadcast_to(np.asarray(support(_frequency_mesh(grid)), dtype=bool), grid.shape)
        return mask

    def random_band_limited(
        self,
        grid: GridSpec,
        support: Optional[SupportPredicate],
        seed: int,
    ) -> ComplexField:
        """Complex Gaussian coefficients on the supported modes, unit L2 norm.

        Coefficients are drawn in lexicographic order of the integer wavenumbers, so
        two grids with the same extents and the same supported modes produce the
        same continuum field.
        """
        mask = self.support_mask(grid, support)
        if not np.any(mask):
            raise SupportError("support predicate selects no lattice mode")
        modes = _wavenumbers(grid)[mask]
        order = np.lexsort(modes.T[::-1])
        rng = np.random.default_rng(seed)
        draws = rng.standard_normal(len(order)) + 1j * rng.standard_normal(len(order))
        coefficients = np.empty(len(order), dtype=complex)
        coefficients[order] = draws
        spectrum = np.zeros(grid.shape, dtype=complex)
        spectrum[mask] = coefficients
        values = self.inverse_values(spectrum, grid)
        field = ComplexField(grid, values)
        return field * (1.0 / field.norm())

    def random_smooth_packet(
        self,
        grid: GridSpec,
        center: Union[float, Tuple[float, ...]],
        width: float,
        seed: int,
        one_sided_axis: Optional[int] = None,
        spread: float = 3.0,
        bumps: int = 3,
    ) -> ComplexField:
        """Random superposition of Gaussian packets centred at `center` in frequency.

        Decays fast in x and, under dispersive flows, at every fixed x in t. With
        `one_sided_axis` set, modes with xi_axis <= 0 are zeroed.
        """
        xi = _frequency_mesh(grid)
        center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dimension,))
        rng = np.random.default_rng(seed)
        shifts = rng.uniform(-spread, spread, size=(bumps, grid.dimension))
        weights = rng.standard_normal(bumps) + 1j * rng.standard_normal(bumps)
        envelope = np.exp(-np.sum((xi - center) ** 2, axis=-1) / (2 * width ** 2))
        modulation = sum(w * np.exp(-1j * (xi @ y)) for w, y in zip(weights, shifts))
        spectrum = envelope * modulation
        spectrum[np.abs(envelope) < 1e-16] = 0.0
        if one_sided_axis is not None:
            spectrum[xi[..., one_sided_axis] <= 0] = 0.0
        if not np.any(spectrum):
            raise SupportError(f"packet centred at {center.tolist()} has no modes on the lattice")
        field = ComplexField(grid, self.inverse_values(spectrum, grid))
        return field * (1.0 / field.norm())
