import os
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize

from ..errors import HomogeneityError, SymbolError
from ..models.schemas import ClassificationReport, CriticalPoint, PredicateResult
from ..models.symbols import PolynomialSymbol, RadialSymbol, Symbol, as_points
from .catalog import normal_form_catalog

logger = logging.getLogger(__name__)

PREDICATE_TOL = 1e-8
# log-log slope of the per-shell lower constant below which the bound is taken to decay
DECAY_SLOPE = -0.1
OUTER_SHELLS = 4


def sphere_points(dimension: int, count: int) -> np.ndarray:
    """Quasi-uniform points on S^{n-1}; coordinate axis directions are always included"""
    if dimension == 1:
        return np.array([[1.0], [-1.0]])
    if dimension == 2:
        count = max(4, int(np.ceil(count / 4)) * 4)
        angles = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    k = np.arange(count) + 0.5
    polar = np.arccos(1 - 2 * k / count)
    azimuth = np.pi * (1 + 5 ** 0.5) * k
    fibonacci = np.stack(
        [np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)], axis=-1
    )
    axes = np.concatenate([np.eye(3), -np.eye(3)])
    return np.concatenate([axes, fibonacci])


class SymbolService:
    """Differentiation and classification of symbols: dispersiveness predicates, critical points, Hessian ranks"""

    def __init__(self):
        self.sphere_samples = int(os.getenv("LAB_SPHERE_SAMPLES", "10000"))
        self.ladder_max = int(os.getenv("LAB_RADII_LADDER_MAX", "7"))
        self.seeds_per_axis = int(os.getenv("LAB_SEEDS_PER_AXIS", "20"))
        self.search_box = float(os.getenv("LAB_SEARCH_BOX", "3.0"))
        self.rank_tol = float(os.getenv("LAB_RANK_TOL", "1e-8"))
        self.shell_samples = min(self.sphere_samples, 2000)
        logger.info("Symbol service initialized")

    # -- derivatives ---------------------------------------------------------

    def grad(self, a: Symbol, xi) -> np.ndarray:
        xi = as_points(xi, a.dimension)
        if not np.all(np.isfinite(xi)):
            raise SymbolError(f"gradient requested at a non-finite point {xi.tolist()}")
        g = a.gradient(xi)
        if not np.all(np.isfinite(g)):
            raise SymbolError(f"gradient of {a.name} is not finite at {xi.tolist()}")
        return g

    def euler_residual(self, a: Symbol, points: np.ndarray) -> float:
        """max |m a - xi . grad a| / (1 + |a| + |xi||grad a|)"""
        points = as_points(points, a.dimension)
        values = a.evaluate(points)
        gradients = a.gradient(points)
        scale = 1.0 + np.abs(values) + np.linalg.norm(points, axis=-1) * np.linalg.norm(gradients, axis=-1)
        residual = np.abs(a.order * values - np.sum(points * gradients, axis=-1)) / scale
        return float(np.max(residual))

    def gradient_consistency(self, a: Symbol, points: np.ndarray) -> float:
        """Max relative deviation between the symbol's gradient and finite differences"""
        from ..models.symbols import finite_difference_gradient

        points = as_points(points, a.dimension)
        analytic = a.gradient(points)
        numeric = finite_difference_gradient(a.evaluate, points)
        scale = np.maximum(np.linalg.norm(analytic, axis=-1), 1.0)
        return float(np.max(np.linalg.norm(analytic - numeric, axis=-1) / scale))

    def hoshiro_pointwise_gap(self, a: Symbol, points: np.ndarray) -> float:
        """max over xi != 0 of |a|^{1/2} - m^{-1/2}|xi|^{1/2}|grad a|^{1/2}; nonpositive when the bound holds"""
        points = as_points(points, a.dimension)
        rho = np.linalg.norm(points, axis=-1)
        points = points[rho > 0]
        rho = rho[rho > 0]
        lhs = np.sqrt(np.abs(a.evaluate(points)))
        rhs = np.sqrt(rho * np.linalg.norm(a.gradient(points), axis=-1) / a.order)
        return float(np.max(lhs - rhs * (1 + 1e-12)))

    # -- predicates ----------------------------------------------------------

    def check_H(self, a: Symbol, sphere_samples: Optional[int] = None) -> Tuple[bool, float]:
        """(holds, min |grad a| on the unit sphere) for a homogeneous symbol"""
        points = sphere_points(a.dimension, sphere_samples or self.sphere_samples)
        tolerance = 1e-8 if a.has_analytic_gradient else 1e-5
        residual = self.euler_residual(a, points)
        if a.order <= 0 or residual > tolerance:
            raise HomogeneityError(f"{a.name} is not positively homogeneous (Euler residual {residual:.3g})")

        norms = np.linalg.norm(a.gradient(points), axis=-1)
        best = int(np.argmin(norms))
        minimum = float(norms[best])
        if a.dimension > 1 and minimum > 0:
            refined = minimize(
                lambda v: float(np.linalg.norm(a.gradient(v / np.linalg.norm(v)))),
                points[best],
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400},
            )
            minimum = min(minimum, float(refined.fun))
        holds = minimum > PREDICATE_TOL
        logger.debug(f"check_H({a.name}): min gradient {minimum:.6g}")
        return holds, minimum

    def default_radii(self) -> List[float]:
        return [2.0 ** k for k in range(-3, self.ladder_max + 1)]

    def _partial_zero_points(self, a: Symbol, radius: float) -> np.ndarray:
        """Points of the circle |xi| = radius where some partial derivative of a changes sign"""
        angles = 2 * np.pi * np.arange(self.shell_samples + 1) / self.shell_samples

        def circle(theta):
            theta = np.asarray(theta, dtype=float)
            return radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

        found = []
        for j in range(a.dimension):
            values = a.gradient(circle(angles))[:, j]
            found.extend(angles[:-1][values[:-1] == 0.0])
            for i in np.nonzero(values[:-1] * values[1:] < 0)[0]:
                found.append(brentq(lambda t: float(a.gradient(circle(t))[j]), angles[i], angles[i + 1], xtol=1e-14))
        if not found:
            return np.empty((0, 2))
        return circle(np.array(found))

    def shell_constants(self, a: Symbol, radii: Sequence[float]) -> np.ndarray:
        """min |grad a| / <xi>^{m-1} on each shell |xi| = r"""
        directions = sphere_points(a.dimension, self.shell_samples)
        constants = []
        for r in radii:
            scale = np.sqrt(1.0 + r ** 2) ** (a.order - 1)
            points = r * directions
            if a.dimension == 2:
                points = np.concatenate([points, self._partial_zero_points(a, r)])
            norms = np.linalg.norm(a.gradient(points), axis=-1)
            best = int(np.argmin(norms))
            minimum = float(norms[best])
            if a.dimension > 2 and minimum > 0:
                refined = minimize(
                    lambda v: float(np.linalg.norm(a.gradient(r * v / np.linalg.norm(v)))),
                    points[best] / r,
                    method="Nelder-Mead",
                    options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400},
                )
                minimum = min(minimum, float(refined.fun))
            constants.append(minimum / scale)
        return np.array(constants)

    def _keeps_falling(self, radii: Sequence[float], constants: np.ndarray) -> bool:
        """True when the per-shell constant decays like a power of |xi| over the outer shells"""
        radii = np.asarray(radii, dtype=float)
        outer = np.nonzero(radii >= 1.0)[0][-OUTER_SHELLS:]
        if len(outer) < 3 or np.any(constants[outer] <= 0):
            return False
        slope = np.polyfit(np.log(radii[outer]), np.log(constants[outer]), 1)[0]
        return bool(slope < DECAY_SLOPE)

    def _lower_bound(
        self,
        a: Symbol,
        radii: Sequence[float],
        critical_points: Sequence[CriticalPoint],
        include_origin: bool,
        threshold: float = 0.0,
    ) -> Tuple[bool, float, float]:
        """(holds, c over all shells, c on the outermost shell)"""
        constants = self.shell_constants(a, radii)
        c = float(np.min(constants))
        if include_origin:
            c = min(c, float(np.linalg.norm(a.gradient(np.zeros(a.dimension)))))
        for point in critical_points:
            norm = np.linalg.norm(point.point)
            if norm < threshold or (not include_origin and norm < 1e-6):
                continue
            c = 0.0
        falling = self._keeps_falling(radii, constants)
        if falling:
            logger.debug(f"lower bound for {a.name} decays over the outer shells: {constants[-OUTER_SHELLS:]}")
        return c > PREDICATE_TOL and not falling, c, float(constants[-1])

    def check_L(
        self,
        a: Symbol,
        radii: Optional[Sequence[float]] = None,
        critical_points: Optional[Sequence[CriticalPoint]] = None,
    ) -> Tuple[bool, float]:
        """(holds, c) with c = min |grad a| / <xi>^{m-1} over the sample ladder"""
        radii = sorted(radii) if radii is not None else self.default_radii()
        if critical_points is None:
            critical_points = self.find_critical_points(a)
        holds, c, _ = self._lower_bound(a, radii, critical_points, include_origin=not a.is_homogeneous)
        return holds, c

    def check_Lprime(
        self,
        a: Symbol,
        threshold: float,
        radii: Optional[Sequence[float]] = None,
        critical_points: Optional[Sequence[CriticalPoint]] = None,
    ) -> Tuple[bool, float]:
        """check_L restricted to |xi| >= threshold"""
        if radii is None:
            radii = [threshold * 2.0 ** k for k in range(0, self.ladder_max + 1)]
        radii = sorted(r for r in radii if r >= threshold)
        if not radii:
            return False, 0.0
        if critical_points is None:
            critical_points = self.find_critical_points(a)
        holds, c, _ = self._lower_bound(a, radii, critical_points, include_origin=False, threshold=threshold)
        return holds, c

    # -- critical points -----------------------------------------------------

    def find_critical_points(
        self,
        a: Symbol,
        box: Optional[float] = None,
        seeds_per_axis: Optional[int] = None,
        max_iterations: int = 200,
    ) -> List[CriticalPoint]:
        """Newton on grad a = 0 from a uniform seed lattice, vectorized over seeds"""
        box = box or self.search_box
        seeds_per_axis = seeds_per_axis or self.seeds_per_axis
        axis = np.linspace(-box, box, seeds_per_axis)
        x = np.stack(np.meshgrid(*([axis] * a.dimension), indexing="ij"), axis=-1).reshape(-1, a.dimension)
        active = np.ones(len(x), dtype=bool)
        converged = np.zeros(len(x), dtype=bool)

        for _ in range(max_iterations):
            if not np.any(active):
                break
            idx = np.nonzero(active)[0]
            g = a.gradient(x[idx])
            H = a.hessian(x[idx])
            # least-squares step handles singular Hessians on critical manifolds
            step = np.einsum("...ij,...j->...i", np.linalg.pinv(H, rcond=1e-12), g)
            x[idx] = x[idx] - step
            small = np.linalg.norm(step, axis=-1) <= 1e-12 * np.maximum(1.0, np.linalg.norm(x[idx], axis=-1))
            done = small & (np.linalg.norm(g, axis=-1) < 1e-12)
            converged[idx[done]] = True
            active[idx[done]] = False
            lost = ~np.all(np.isfinite(x[idx]), axis=-1) | (np.linalg.norm(x[idx], axis=-1) > 1e3 * box)
            active[idx[lost]] = False
        # degenerate zeros converge only linearly; accept them on the gradient test alone
        if np.any(active):
            idx = np.nonzero(active)[0]
            converged[idx[np.linalg.norm(a.gradient(x[idx]), axis=-1) < 1e-12]] = True

        roots: List[np.ndarray] = []
        for point in x[converged]:
            if not any(np.linalg.norm(point - r) < 1e-6 for r in roots):
                roots.append(point)
        roots.sort(key=lambda p: tuple(np.round(p, 9)))

        result = []
        for point in roots:
            rank, signature = self.hessian_rank(a, point)
            result.append(
                CriticalPoint(
                    point=[float(v) for v in point],
                    rank=rank,
                    signature=signature,
                    non_degenerate=rank == a.dimension,
                    gradient_norm=float(np.linalg.norm(a.gradient(point))),
                )
            )
        logger.debug(f"find_critical_points({a.name}): {len(result)} point(s) from {len(x)} seeds")
        return result

    def hessian_rank(self, a: Symbol, xi, rel_tol: Optional[float] = None) -> Tuple[int, Tuple[int, int, int]]:
        rel_tol = self.rank_tol if rel_tol is None else rel_tol
        H = np.asarray(a.hessian(as_points(xi, a.dimension)), dtype=float)
        if not np.all(np.isfinite(H)):
            raise SymbolError(f"Hessian of {a.name} is not finite at {np.asarray(xi).tolist()}")
        singular = np.linalg.svd(H, compute_uv=False)
        # Newton lands within ~1e-12 of degenerate zeros; a Hessian of that size is the zero matrix
        if singular[0] <= 1e-9:
            return 0, (0, 0, a.dimension)
        cutoff = rel_tol * singular[0]
        rank = int(np.sum(singular > cutoff))
        eigenvalues = np.linalg.eigvalsh(H)
        positive = int(np.sum(eigenvalues > cutoff))
        negative = int(np.sum(eigenvalues < -cutoff))
        return rank, (positive, negative, a.dimension - positive - negative)

    # -- classification ------------------------------------------------------

    def _check_high_low(self, a: Symbol) -> PredicateResult:
        principal = a.principal_part
        if principal is None:
            return PredicateResult(holds=False, status="unverified at resolution", note="no principal part identified")
        try:
            dispersive, minimum = self.check_H(principal)
        except HomogeneityError as e:
            return PredicateResult(holds=False, status="unverified at resolution", note=str(e))
        if not dispersive:
            return PredicateResult(holds=False, status="refuted", witness=minimum, note="principal part degenerates on the sphere")
        if a.is_homogeneous:
            return PredicateResult(holds=True, status="verified", witness=minimum, note="no lower-order part")
        if isinstance(a, PolynomialSymbol):
            return PredicateResult(holds=True, status="verified", witness=minimum, note="remainder has lower degree")

        # remainder bounds for |alpha| <= 2 on the outer shells
        radii = [2.0 ** k for k in range(0, self.ladder_max + 1)]
        ratios = []
        for r in radii:
            points = r * sphere_points(a.dimension, self.shell_samples)
            bracket = np.sqrt(1.0 + r ** 2)
            values = np.abs(a.evaluate(points) - principal.evaluate(points))
            gradients = np.linalg.norm(a.gradient(points) - principal.gradient(points), axis=-1)
            hessians = np.linalg.norm(a.hessian(points) - principal.hessian(points), axis=(-2, -1))
            ratios.append(
                max(
                    values.max() / bracket ** (a.order - 1),
                    gradients.max() / bracket ** (a.order - 2),
                    hessians.max() / bracket ** (a.order - 3),
                )
            )
        bounded = ratios[-1] <= 2 * max(max(ratios[:-1]), 1e-12)
        return PredicateResult(
            holds=bool(bounded),
            status="verified" if bounded else "refuted",
            witness=minimum,
            note="derivatives of order > 2 unchecked",
        )

    def _threshold_radius(self, a: Symbol, critical_points: List[CriticalPoint]) -> PredicateResult:
        for k in range(0, self.ladder_max + 1):
            threshold = 2.0 ** k
            holds, c = self.check_Lprime(a, threshold, critical_points=critical_points)
            if holds:
                return PredicateResult(holds=True, status="verified", witness=threshold, note=f"c={c:.6g}")
        return PredicateResult(holds=False, status="refuted", note="gradient bound fails on every threshold")

    def classify(self, a: Symbol) -> ClassificationReport:
        logger.info(f"Classifying {a.name} (n={a.dimension}, m={a.order:g}, kind={a.kind})")
        notes: List[str] = []
        critical_points = self.find_critical_points(a)

        if a.is_homogeneous:
            try:
                holds, minimum = self.check_H(a)
                H = PredicateResult(holds=holds, status="verified" if holds else "refuted", witness=minimum)
            except HomogeneityError as e:
                H = PredicateResult(holds=False, status="unverified at resolution", note=str(e))
        else:
            H = PredicateResult(holds=False, status="refuted", note="symbol is not homogeneous")

        holds, c, outer = self._lower_bound(
            a, self.default_radii(), critical_points, include_origin=not a.is_homogeneous
        )
        L = PredicateResult(
            holds=holds,
            status="verified" if holds else "refuted",
            witness=c,
            note=f"c={outer:.6g} on |xi|={self.default_radii()[-1]:g}",
        )
        HL = self._check_high_low(a)
        Lprime = self._threshold_radius(a, critical_points)

        profile_zeros = None
        theorems: List[str] = []
        if H.holds:
            theorems.append("homogeneous-dispersive")
        if L.holds:
            theorems.append("lower-order-dispersive")
        if HL.holds:
            theorems.append("high-frequency-local")
        if isinstance(a, RadialSymbol):
            profile_zeros = a.profile_zeros()
            if profile_zeros is not None:
                theorems.append("radial")
            else:
                notes.append("radial profile is constant")
        polynomial = a if isinstance(a, PolynomialSymbol) else (a.as_polynomial() if isinstance(a, RadialSymbol) else None)
        if polynomial is not None and polynomial.degree > 0:
            theorems.append("polynomial")
        if a.is_homogeneous and a.order == 2:
            away = [p for p in critical_points if np.linalg.norm(p.point) > 1e-6]
            if all(p.rank >= a.dimension - 1 for p in away):
                theorems.append("hessian-rank")
        if critical_points and all(p.non_degenerate for p in critical_points) and Lprime.holds:
            theorems.append("isolated-critical")
        elif not critical_points and Lprime.holds and not L.holds:
            notes.append("no critical point found in the search box")
        if any(not p.non_degenerate for p in critical_points):
            notes.append("degenerate critical points detected (critical set may be non-isolated)")

        principal = a.principal_part
        return ClassificationReport(
            symbol=a.name,
            dimension=a.dimension,
            order=a.order,
            kind=a.kind,
            principal_part=principal.name if principal is not None else None,
            H=H,
            L=L,
            HL=HL,
            Lprime=Lprime,
            critical_points=critical_points,
            profile_zeros=profile_zeros,
            applicable_theorems=theorems,
            notes=notes,
        )

    def normal_form_catalog(self):
        return normal_form_catalog()


def get_symbol_service() -> SymbolService:
    return SymbolService()
