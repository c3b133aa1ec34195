"""Frequency-space changes of variables psi and the cut-offs gamma used by the canonical operators."""
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, SymbolError

logger = logging.getLogger(__name__)


def smoothstep(s: np.ndarray) -> np.ndarray:
    """C^2 ramp 6s^5 - 15s^4 + 10s^3, clipped to [0, 1]"""
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10 - 15 * s + 6 * s ** 2)


class FrequencyMap:
    kind = "abstract"
    is_linear = False
    is_homogeneous = False

    def __init__(self, dimension: int, label: str):
        self.dimension = dimension
        self.label = label

    def forward(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, eta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, xi: np.ndarray) -> np.ndarray:
        """D psi(xi) with entry [i, j] = d psi_i / d xi_j"""
        raise NotImplementedError

    def jacobian_det(self, xi: np.ndarray) -> np.ndarray:
        return np.linalg.det(self.jacobian(xi))

    def determinant_window(self, xi: np.ndarray) -> float:
        """Smallest C with 1/C <= |det D psi| <= C over the given points"""
        det = np.abs(self.jacobian_det(np.asarray(xi, dtype=float)))
        if np.any(det == 0) or not np.all(np.isfinite(det)):
            return float("inf")
        return float(max(det.max(), 1.0 / det.min()))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label})"


class LinearMap(FrequencyMap):
    kind = "linear"
    is_linear = True
    is_homogeneous = True

    def __init__(self, matrix: Sequence[Sequence[float]], label: Optional[str] = None):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape[0] != matrix.shape[1] or matrix.shape[0] not in (1, 2, 3):
            raise ConfigError(f"linear map needs a square 1x1..3x3 matrix, got shape {matrix.shape}")
        if np.linalg.cond(matrix) > 1e12:
            raise SymbolError(f"linear map {matrix.tolist()} is not invertible")
        super().__init__(matrix.shape[0], label or f"linear{matrix.tolist()}")
        self.matrix = matrix
        self.inverse_matrix = np.linalg.inv(matrix)

    @classmethod
    def identity(cls, dimension: int) -> "LinearMap":
        return cls(np.eye(dimension), label="identity")

    @classmethod
    def rotation(cls, angle: float) -> "LinearMap":
        c, s = np.cos(angle), np.sin(angle)
        return cls([[c, -s], [s, c]], label=f"rotation({angle:g})")

    @classmethod
    def scaling(cls, factor: float, dimension: int = 1) -> "LinearMap":
        return cls(factor * np.eye(dimension), label=f"scale({factor:g})")

    @classmethod
    def shear(cls, amount: float = 1.0) -> "LinearMap":
        return cls([[1.0, amount], [0.0, 1.0]], label=f"shear({amount:g})")

    def forward(self, xi: np.ndarray) -> np.ndarray:
        return np.asarray(xi, dtype=float) @ self.matrix.T

    def inverse(self, eta: np.ndarray) -> np.ndarray:
        return np.asarray(eta, dtype=float) @ self.inverse_matrix.T

    def jacobian(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.broadcast_to(self.matrix, xi.shape[:-1] + self.matrix.shape)

    def jacobian_det(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.full(xi.shape[:-1], np.linalg.det(self.matrix))

    def lattice_matrix(self, lengths: Sequence[float], use_inverse: bool = False) -> Optional[np.ndarray]:
        """Integer matrix K with psi(xi_k) = xi_{K k} on the lattice 2 pi k / L, if there is one"""
        matrix = self.inverse_matrix if use_inverse else self.matrix
        lengths = np.asarray(lengths, dtype=float)
        K = np.diag(lengths / (2 * np.pi)) @ matrix @ np.diag(2 * np.pi / lengths)
        rounded = np.rint(K)
        if np.allclose(K, rounded, atol=1e-12, rtol=0.0):
            return rounded.astype(np.int64)
        return None


class RadialWarp(FrequencyMap):
    """psi(xi) = r(|xi|) xi / |xi| for a strictly increasing r with r(0) = 0"""

    kind = "radial_warp"

    def __init__(
        self,
        dimension: int,
        r: Callable[[np.ndarray], np.ndarray],
        r_prime: Callable[[np.ndarray], np.ndarray],
        label: str,
        homogeneous: bool = False,
        r_inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        super().__init__(dimension, label)
        self.r = r
        self.r_prime = r_prime
        self.is_homogeneous = homogeneous
        self._r_inverse = r_inverse
        probe = np.linspace(0.0, 100.0, 2001)
        if np.any(np.asarray(r_prime(probe)) <= 0):
            raise SymbolError(f"radial warp {label} is not strictly increasing on [0, 100]")

    @classmethod
    def scale(cls, dimension: int, factor: float) -> "RadialWarp":
        if factor <= 0:
            raise ConfigError(f"scale factor must be positive, got {factor}")
        return cls(
            dimension,
            lambda rho: factor * rho,
            lambda rho: np.full_like(np.asarray(rho, dtype=float), factor),
            label=f"radial_scale({factor:g})",
            homogeneous=True,
            r_inverse=lambda rho: rho / factor,
        )

    @classmethod
    def cubic(cls, dimension: int, beta: float) -> "RadialWarp":
        """r(rho) = rho + beta rho^3"""
        if beta < 0:
            raise ConfigError(f"cubic warp needs beta >= 0, got {beta}")
        return cls(
            dimension,
            lambda rho: rho + beta * rho ** 3,
            lambda rho: 1.0 + 3 * beta * rho ** 2,
            label=f"radial_cubic({beta:g})",
            homogeneous=beta == 0,
        )

    def invert_profile(self, target: np.ndarray) -> np.ndarray:
        target = np.asarray(target, dtype=float)
        if self._r_inverse is not None:
            return self._r_inverse(target)
        rho = target.copy()
        for _ in range(60):
            step = (self.r(rho) - target) / self.r_prime(rho)
            rho = np.maximum(rho - step, 0.0)
            if np.max(np.abs(step), initial=0.0) <= 1e-15 * max(1.0, float(np.max(target, initial=0.0))):
                break
        return rho

    def _radial(self, xi: np.ndarray, new_radius: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        rho = np.linalg.norm(xi, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        factor = np.where(rho > 0, new_radius(rho) / safe, 0.0)
        return factor[..., None] * xi

    def forward(self, xi: np.ndarray) -> np.ndarray:
        return self._radial(xi, self.r)

    def inverse(self, eta: np.ndarray) -> np.ndarray:
        return self._radial(eta, self.invert_profile)

    def jacobian(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        rho = np.linalg.norm(xi, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        ratio = np.where(rho > 0, self.r(rho) / safe, self.r_prime(rho))
        derivative = np.asarray(self.r_prime(rho), dtype=float)
        unit = xi / safe[..., None]
        outer = unit[..., :, None] * unit[..., None, :]
        identity = np.eye(self.dimension)
        return ratio[..., None, None] * identity + (derivative - ratio)[..., None, None] * outer

    def jacobian_det(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        rho = np.linalg.norm(xi, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        derivative = np.asarray(self.r_prime(rho), dtype=float)
        ratio = np.where(rho > 0, self.r(rho) / safe, derivative)
        return derivative * ratio ** (self.dimension - 1)


class CutoffSpec:
    """Cut-off gamma with 0 <= gamma <= 1, built from C^2 ramps.

    kind `ball`: 1 on |xi - center| <= inner, 0 beyond outer.
    kind `cone`: angular ramp around `direction` with half-aperture `aperture`
    (radians) and an optional radial band (r_min, r_max); without a band the
    cone is homogeneous of degree 0 and vanishes only at the origin.
    kind `full`: gamma = 1.
    """

    def __init__(
        self,
        kind: str = "full",
        dimension: int = 1,
        center: Optional[Sequence[float]] = None,
        inner: float = 1.0,
        outer: float = 2.0,
        direction: Optional[Sequence[float]] = None,
        aperture: float = np.pi / 4,
        radial_band: Optional[Tuple[float, float]] = None,
        softness: float = 0.25,
    ):
        if kind not in ("ball", "cone", "full"):
            raise ConfigError(f"unknown cut-off kind '{kind}'")
        if kind == "ball" and not 0 <= inner < outer:
            raise ConfigError(f"ball cut-off needs 0 <= inner < outer, got {inner}, {outer}")
        if kind == "cone" and not 0 < aperture <= np.pi:
            raise ConfigError(f"cone aperture must lie in (0, pi], got {aperture}")
        if radial_band is not None and not 0 < radial_band[0] < radial_band[1]:
            raise ConfigError(f"radial band needs 0 < r_min < r_max, got {radial_band}")
        if not 0 < softness < 1:
            raise ConfigError(f"softness must lie in (0, 1), got {softness}")
        self.kind = kind
        self.dimension = dimension
        self.center = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)
        self.inner = inner
        self.outer = outer
        d = np.eye(dimension)[0] if direction is None else np.asarray(direction, dtype=float)
        self.direction = d / np.linalg.norm(d)
        self.aperture = aperture
        self.radial_band = radial_band
        self.softness = softness

    @property
    def is_compact(self) -> bool:
        return self.kind == "ball" or (self.kind == "cone" and self.radial_band is not None)

    @property
    def is_homogeneous(self) -> bool:
        return self.kind == "full" or (self.kind == "cone" and self.radial_band is None)

    def label(self) -> str:
        if self.kind == "ball":
            return f"ball({self.center.tolist()},{self.inner:g},{self.outer:g})"
        if self.kind == "cone":
            band = "" if self.radial_band is None else f",{self.radial_band[0]:g}-{self.radial_band[1]:g}"
            return f"cone({self.direction.tolist()},{self.aperture:g}{band})"
        return "full"

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.kind == "full":
            return np.ones(xi.shape[:-1])
        if self.kind == "ball":
            distance = np.linalg.norm(xi - self.center, axis=-1)
            return smoothstep((self.outer - distance) / (self.outer - self.inner))
        rho = np.linalg.norm(xi, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        cosine = np.clip((xi @ self.direction) / safe, -1.0, 1.0)
        angle = np.arccos(cosine)
        value = smoothstep((self.aperture - angle) / (self.softness * self.aperture))
        if self.radial_band is not None:
            r_min, r_max = self.radial_band
            value = value * smoothstep((rho - r_min) / (self.softness * r_min))
            value = value * smoothstep((r_max - rho) / (self.softness * r_max))
        return np.where(rho > 0, value, 0.0)

    def induced(self, frequency_map: FrequencyMap) -> Callable[[np.ndarray], np.ndarray]:
        """gamma~ = gamma o psi^{-1}"""
        return lambda eta: self.evaluate(frequency_map.inverse(eta))


__all__ = ["smoothstep", "FrequencyMap", "LinearMap", "RadialWarp", "CutoffSpec"]
