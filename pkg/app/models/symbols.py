"""Symbols a(xi): values, gradients and Hessians, vectorized over arrays of points of shape (..., n)."""
import logging
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy
from numpy.polynomial import polynomial as P
from numpy.polynomial import Polynomial

from ..errors import SymbolError

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
RHO = sympy.Symbol("rho", nonnegative=True)


def xi_symbols(dimension: int) -> Tuple[sympy.Symbol, ...]:
    return tuple(sympy.Symbol(f"xi{j + 1}", real=True) for j in range(dimension))


def as_points(xi, dimension: int) -> np.ndarray:
    points = np.asarray(xi, dtype=float)
    if dimension == 1 and points.ndim == 0:
        points = points.reshape(1)
    if points.shape[-1] != dimension:
        raise SymbolError(f"expected points with {dimension} components, got shape {points.shape}")
    return points


def homogeneous_degree(expression: sympy.Expr, variables: Sequence[sympy.Symbol]) -> Optional[float]:
    """Degree m with a(lambda xi) = lambda^m a(xi) for lambda > 0, or None"""
    if expression == 0:
        return None
    lam = sympy.Symbol("lambda_", positive=True)
    scaled = expression.subs({v: lam * v for v in variables}, simultaneous=True)
    ratio = sympy.simplify(scaled / expression)
    if ratio.free_symbols - {lam}:
        return None
    degree = sympy.simplify(lam * sympy.diff(ratio, lam) / ratio)
    if degree.free_symbols:
        return None
    return float(degree)


def finite_difference_gradient(func: Callable[[np.ndarray], np.ndarray], xi: np.ndarray) -> np.ndarray:
    """Five-point central differences with one Richardson step"""
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    h = _EPS ** (1.0 / 3.0) * np.maximum(1.0, np.linalg.norm(xi, axis=-1))
    grad = np.empty_like(xi)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0

        def stencil(step: np.ndarray) -> np.ndarray:
            s = step[..., None] * e
            return (-func(xi + 2 * s) + 8 * func(xi + s) - 8 * func(xi - s) + func(xi - 2 * s)) / (12 * step)

        grad[..., j] = (16 * stencil(h / 2) - stencil(h)) / 15
    return grad


def finite_difference_hessian(gradient: Callable[[np.ndarray], np.ndarray], xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    h = _EPS ** (1.0 / 3.0) * np.maximum(1.0, np.linalg.norm(xi, axis=-1))
    hess = np.empty(xi.shape + (n,))
    for j in range(n):
        s = h[..., None] * np.eye(n)[j]
        hess[..., :, j] = (gradient(xi + s) - gradient(xi - s)) / (2 * h[..., None])
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


def _drop_point_masses(expression: sympy.Expr) -> sympy.Expr:
    # derivatives of sign(x) produce DiracDelta terms supported on a null set
    return expression.replace(sympy.DiracDelta, lambda *args: sympy.S.Zero)


def _broadcast(value, shape: Tuple[int, ...]) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()


class Symbol:
    """Real symbol on R^n of order m.

    Subclasses provide `evaluate`; `gradient` and `hessian` fall back to finite
    differences when no analytic form is available.
    """

    kind = "abstract"
    has_analytic_gradient = False

    def __init__(self, dimension: int, order: float, name: str):
        if dimension not in (1, 2, 3):
            raise SymbolError(f"dimension must be 1, 2 or 3, got {dimension}")
        if not np.isfinite(order) or order < 0:
            raise SymbolError(f"order must be finite and nonnegative, got {order}")
        self.dimension = dimension
        self.order = float(order)
        self.name = name

    @property
    def is_homogeneous(self) -> bool:
        return False

    @property
    def principal_part(self) -> Optional["Symbol"]:
        return None

    def evaluate(self, xi) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        return finite_difference_gradient(self.evaluate, xi)

    def hessian(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        return finite_difference_hessian(self.gradient, xi)

    def __call__(self, xi) -> np.ndarray:
        return self.evaluate(xi)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, n={self.dimension}, m={self.order:g})"


class PolynomialSymbol(Symbol):
    """Real polynomial sum_alpha c_alpha xi^alpha stored as a dense coefficient table"""

    kind = "polynomial"
    has_analytic_gradient = True

    def __init__(self, coefficients: Mapping[Tuple[int, ...], float], dimension: Optional[int] = None, name: Optional[str] = None):
        terms: Dict[Tuple[int, ...], float] = {}
        for alpha, value in coefficients.items():
            alpha = tuple(int(p) for p in alpha)
            if any(p < 0 for p in alpha):
                raise SymbolError(f"negative exponent in multi-index {alpha}")
            value = complex(value)
            if value.imag != 0:
                raise SymbolError(f"coefficient of {alpha} is not real: {value}")
            if value.real != 0:
                terms[alpha] = terms.get(alpha, 0.0) + value.real
        if dimension is None:
            if not coefficients:
                raise SymbolError("dimension is required for the zero polynomial")
            dimension = len(next(iter(coefficients)))
        if any(len(alpha) != dimension for alpha in terms):
            raise SymbolError(f"multi-indices must have {dimension} entries")
        self.terms = {alpha: c for alpha, c in terms.items() if c != 0}
        degree = max((sum(alpha) for alpha in self.terms), default=0)
        super().__init__(dimension, degree, name or format_polynomial(self.terms, dimension))

        table = np.zeros((degree + 1,) * dimension)
        for alpha, c in self.terms.items():
            table[alpha] = c
        self._table = table
        self._gradient_tables = [P.polyder(table, axis=j) for j in range(dimension)]
        self._hessian_tables = [
            [P.polyder(self._gradient_tables[i], axis=j) for j in range(dimension)] for i in range(dimension)
        ]

    @classmethod
    def from_expression(cls, expression: sympy.Expr, dimension: int, name: Optional[str] = None) -> "PolynomialSymbol":
        variables = xi_symbols(dimension)
        try:
            poly = sympy.Poly(sympy.expand(expression), *variables)
        except sympy.PolynomialError as e:
            raise SymbolError(f"not a polynomial in xi: {expression}") from e
        coefficients = {}
        for monomial, coefficient in poly.terms():
            if not coefficient.is_real:
                raise SymbolError(f"coefficient {coefficient} is not real")
            coefficients[monomial] = float(coefficient)
        return cls(coefficients, dimension=dimension, name=name)

    @property
    def degree(self) -> int:
        return int(self.order)

    @property
    def is_homogeneous(self) -> bool:
        return bool(self.terms) and self.degree > 0 and all(sum(a) == self.degree for a in self.terms)

    @property
    def principal_part(self) -> Optional["PolynomialSymbol"]:
        if self.degree == 0:
            return None
        if self.is_homogeneous:
            return self
        top = {a: c for a, c in self.terms.items() if sum(a) == self.degree}
        return PolynomialSymbol(top, dimension=self.dimension)

    def lower_order_part(self) -> "PolynomialSymbol":
        """r = a - a_m"""
        rest = {a: c for a, c in self.terms.items() if sum(a) < self.degree}
        return PolynomialSymbol(rest, dimension=self.dimension)

    def to_sympy(self) -> sympy.Expr:
        variables = xi_symbols(self.dimension)
        return sympy.Add(*[sympy.nsimplify(c) * sympy.Mul(*[v ** p for v, p in zip(variables, a)]) for a, c in self.terms.items()])

    def _polyval(self, table: np.ndarray, xi: np.ndarray) -> np.ndarray:
        if self.dimension == 1:
            value = P.polyval(xi[..., 0], table)
        elif self.dimension == 2:
            value = P.polyval2d(xi[..., 0], xi[..., 1], table)
        else:
            value = P.polyval3d(xi[..., 0], xi[..., 1], xi[..., 2], table)
        return _broadcast(value, xi.shape[:-1])

    def evaluate(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        return self._polyval(self._table, xi)

    def gradient(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        return np.stack([self._polyval(t, xi) for t in self._gradient_tables], axis=-1)

    def hessian(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        rows = [np.stack([self._polyval(t, xi) for t in row], axis=-1) for row in self._hessian_tables]
        hess = np.stack(rows, axis=-2)
        return 0.5 * (hess + np.swapaxes(hess, -1, -2))

    def axis_derivative_coefficients(self, axis: int, slices: np.ndarray) -> np.ndarray:
        """Coefficients (ascending in xi_axis) of d_axis a restricted to each slice.

        `slices` holds the remaining coordinates, shape (k, n-1); the result has shape (k, degree).
        """
        table = np.moveaxis(self._gradient_tables[axis], axis, 0)
        if self.dimension == 1:
            count = max(len(np.atleast_2d(slices)), 1)
            return np.tile(table, (count, 1))
        slices = np.asarray(slices, dtype=float).reshape(-1, self.dimension - 1)
        rows = []
        for k in range(table.shape[0]):
            if self.dimension == 2:
                rows.append(P.polyval(slices[:, 0], table[k]))
            else:
                rows.append(P.polyval2d(slices[:, 0], slices[:, 1], table[k]))
        return np.stack(rows, axis=-1)


def format_polynomial(terms: Mapping[Tuple[int, ...], float], dimension: int) -> str:
    if not terms:
        return "0"
    ordered = sorted(terms.items(), key=lambda kv: (-sum(kv[0]), [-p for p in kv[0]]))
    text = ""
    for alpha, c in ordered:
        monomial = "*".join(f"xi{j + 1}" + (f"^{p}" if p > 1 else "") for j, p in enumerate(alpha) if p)
        magnitude = abs(c)
        if not monomial:
            body = f"{magnitude:g}"
        elif magnitude == 1:
            body = monomial
        else:
            body = f"{magnitude:g}*{monomial}"
        if not text:
            text = body if c > 0 else f"-{body}"
        else:
            text += f" + {body}" if c > 0 else f" - {body}"
    return text


class RadialSymbol(Symbol):
    """a(xi) = f(|xi|) for a profile f given as a sympy expression in rho"""

    kind = "radial"
    has_analytic_gradient = True

    def __init__(self, profile, dimension: int, name: Optional[str] = None, order: Optional[float] = None):
        profile = sympy.sympify(profile, locals={"rho": RHO})
        extra = profile.free_symbols - {RHO}
        if extra:
            raise SymbolError(f"radial profile depends on {sorted(str(s) for s in extra)} besides rho")
        self.profile = profile
        self._f = sympy.lambdify(RHO, profile, "numpy")
        self._df = sympy.lambdify(RHO, sympy.diff(profile, RHO), "numpy")
        self._d2f = sympy.lambdify(RHO, sympy.diff(profile, RHO, 2), "numpy")
        self.polynomial: Optional[Polynomial] = None
        if profile.is_polynomial(RHO):
            coefficients = [float(c) for c in reversed(sympy.Poly(profile, RHO).all_coeffs())]
            self.polynomial = Polynomial(coefficients)
        if order is None:
            if self.polynomial is not None:
                order = self.polynomial.degree()
            else:
                order = homogeneous_degree(profile, [RHO])
            if order is None:
                raise SymbolError(f"cannot infer the order of radial profile {profile}; pass it explicitly")
        super().__init__(dimension, order, name or f"radial({sympy.sstr(profile)})")
        self._homogeneous = homogeneous_degree(profile, [RHO]) is not None

    @property
    def is_homogeneous(self) -> bool:
        return self._homogeneous

    @property
    def principal_part(self) -> Optional[Symbol]:
        if self.is_homogeneous:
            return self
        if self.polynomial is not None and self.polynomial.degree() > 0:
            m = self.polynomial.degree()
            return RadialSymbol(sympy.nsimplify(self.polynomial.coef[m]) * RHO ** m, self.dimension)
        return None

    def profile_value(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return _broadcast(self._f(rho), rho.shape)

    def profile_derivative(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return _broadcast(self._df(rho), rho.shape)

    def profile_second_derivative(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return _broadcast(self._d2f(rho), rho.shape)

    def evaluate(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        return self.profile_value(np.linalg.norm(xi, axis=-1))

    def gradient(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        rho = np.linalg.norm(xi, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        scale = np.where(rho > 0, self.profile_derivative(rho) / safe, 0.0)
        return scale[..., None] * xi

    def hessian(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        rho = np.linalg.norm(xi, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        d1 = self.profile_derivative(rho)
        d2 = self.profile_second_derivative(rho)
        unit = xi / safe[..., None]
        outer = unit[..., :, None] * unit[..., None, :]
        identity = np.eye(self.dimension)
        tangential = d1 / safe
        hess = d2[..., None, None] * outer + tangential[..., None, None] * (identity - outer)
        at_origin = d2[..., None, None] * identity if np.all(d1[rho == 0] == 0) else 0.0 * identity
        return np.where((rho > 0)[..., None, None], hess, at_origin)

    def profile_zeros(self) -> Optional[List[float]]:
        """Nonnegative zeros of f', or None when f' vanishes identically"""
        if self.polynomial is not None:
            derivative = self.polynomial.deriv()
            if not np.any(derivative.coef):
                return None
            if derivative.degree() == 0:
                return []
            roots = derivative.roots()
            real = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
            real = real[real >= -1e-12]
            zeros: List[float] = []
            for r in real:
                r = max(float(r), 0.0)
                if not zeros or abs(r - zeros[-1]) > 1e-8:
                    zeros.append(r)
            return zeros
        return self._sampled_profile_zeros()

    def _sampled_profile_zeros(self) -> Optional[List[float]]:
        from scipy.optimize import brentq

        rho = np.concatenate([[0.0], np.logspace(-6, 3, 4000)])
        values = self.profile_derivative(rho)
        if np.all(values == 0):
            return None
        zeros = [float(r) for r in rho[values == 0]]
        for k in np.nonzero(values[:-1] * values[1:] < 0)[0]:
            zeros.append(float(brentq(lambda r: float(self._df(r)), rho[k], rho[k + 1], xtol=1e-14)))
        return sorted(zeros)

    def as_polynomial(self) -> Optional[PolynomialSymbol]:
        """Equivalent polynomial in xi when the profile only has even powers of rho"""
        if self.polynomial is None or np.any(self.polynomial.coef[1::2]):
            return None
        variables = xi_symbols(self.dimension)
        squared = sum(v ** 2 for v in variables)
        expression = sum(sympy.nsimplify(c) * squared ** (k // 2) for k, c in enumerate(self.polynomial.coef) if c)
        return PolynomialSymbol.from_expression(sympy.sympify(expression), self.dimension, name=self.name)


class ClosedFormSymbol(Symbol):
    """Symbol given by a sympy expression in xi1..xin with exact derivatives"""

    has_analytic_gradient = True

    def __init__(self, expression, dimension: int, name: Optional[str] = None, order: Optional[float] = None):
        variables = xi_symbols(dimension)
        expression = sympy.sympify(expression, locals={str(v): v for v in variables})
        extra = expression.free_symbols - set(variables)
        if extra:
            raise SymbolError(f"expression depends on {sorted(str(s) for s in extra)} beyond xi1..xi{dimension}")
        self.expression = expression
        self.variables = variables
        self._homogeneous_degree = homogeneous_degree(expression, variables)
        if order is None:
            order = self._homogeneous_degree
        if order is None:
            raise SymbolError(f"cannot infer the order of {expression}; pass it explicitly")
        super().__init__(dimension, order, name or sympy.sstr(expression))
        self.kind = "homogeneous-closed-form" if self._homogeneous_degree is not None else "closed-form"
        gradient = [_drop_point_masses(sympy.diff(expression, v)) for v in variables]
        hessian = [[_drop_point_masses(sympy.diff(g, v)) for v in variables] for g in gradient]
        self._value = sympy.lambdify(variables, expression, "numpy")
        self._gradient = [sympy.lambdify(variables, g, "numpy") for g in gradient]
        self._hessian = [[sympy.lambdify(variables, h, "numpy") for h in row] for row in hessian]

    @property
    def is_homogeneous(self) -> bool:
        return self._homogeneous_degree is not None

    @property
    def principal_part(self) -> Optional[Symbol]:
        return self if self.is_homogeneous else None

    def _call(self, func, xi: np.ndarray, vanishes_at_origin: bool) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            values = _broadcast(func(*[xi[..., j] for j in range(self.dimension)]), xi.shape[:-1])
        origin = np.all(xi == 0, axis=-1)
        if np.any(origin):
            if not vanishes_at_origin and not np.all(np.isfinite(values[origin])):
                logger.debug(f"{self.name}: no continuous value at the origin, using 0")
            values = np.where(origin & ~np.isfinite(values), 0.0, values)
        return values

    def evaluate(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        return self._call(self._value, xi, self.order > 0)

    def gradient(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        return np.stack([self._call(g, xi, self.order > 1) for g in self._gradient], axis=-1)

    def hessian(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        rows = [np.stack([self._call(h, xi, self.order > 2) for h in row], axis=-1) for row in self._hessian]
        hess = np.stack(rows, axis=-2)
        return 0.5 * (hess + np.swapaxes(hess, -1, -2))


class ComposedSymbol(Symbol):
    """a = sigma o psi for a frequency map psi"""

    kind = "composed"

    def __init__(self, outer: Symbol, frequency_map, name: Optional[str] = None):
        if frequency_map.dimension != outer.dimension:
            raise SymbolError(f"map dimension {frequency_map.dimension} does not match symbol dimension {outer.dimension}")
        super().__init__(outer.dimension, outer.order, name or f"({outer.name})o({frequency_map.label})")
        self.outer = outer
        self.frequency_map = frequency_map
        self.has_analytic_gradient = outer.has_analytic_gradient

    @property
    def is_homogeneous(self) -> bool:
        return self.outer.is_homogeneous and self.frequency_map.is_homogeneous

    @property
    def principal_part(self) -> Optional[Symbol]:
        if self.is_homogeneous:
            return self
        if self.frequency_map.is_linear and self.outer.principal_part is not None:
            return ComposedSymbol(self.outer.principal_part, self.frequency_map)
        return None

    def evaluate(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        return self.outer.evaluate(self.frequency_map.forward(xi))

    def gradient(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        jacobian = self.frequency_map.jacobian(xi)
        outer_gradient = self.outer.gradient(self.frequency_map.forward(xi))
        return np.einsum("...ij,...i->...j", jacobian, outer_gradient)

    def hessian(self, xi) -> np.ndarray:
        xi = as_points(xi, self.dimension)
        if not self.frequency_map.is_linear:
            return super().hessian(xi)
        matrix = self.frequency_map.matrix
        outer_hessian = self.outer.hessian(self.frequency_map.forward(xi))
        hess = np.einsum("ki,...kl,lj->...ij", matrix, outer_hessian, matrix)
        return 0.5 * (hess + np.swapaxes(hess, -1, -2))


__all__ = [
    "RHO",
    "Symbol",
    "PolynomialSymbol",
    "RadialSymbol",
    "ClosedFormSymbol",
    "ComposedSymbol",
    "xi_symbols",
    "as_points",
    "homogeneous_degree",
    "finite_difference_gradient",
    "finite_difference_hessian",
    "format_polynomial",
]
