import logging
from typing import Callable, Optional

import numpy as np
import sympy
from scipy.integrate import quad
from scipy.optimize import brentq

from ..errors import ConfigError, HypothesisError

logger = logging.getLogger(__name__)

_T = sympy.Symbol("t", real=True)


class TimeCoefficient:
    """Coefficient c(t) of i u_t + c(t) a(D) u = 0 on [alpha, beta].

    C(t) = int_0^t c(s) ds is computed by adaptive quadrature unless a closed
    primitive is supplied; C^{-1} is found by bracketing on [alpha, beta].
    """

    def __init__(
        self,
        func: Callable[[np.ndarray], np.ndarray],
        alpha: float,
        beta: float,
        label: str = "c",
        primitive: Optional[Callable[[float], float]] = None,
        samples: int = 1001,
    ):
        if not (np.isfinite(alpha) and np.isfinite(beta) and alpha < beta):
            raise ConfigError(f"time interval must satisfy alpha < beta, got [{alpha}, {beta}]")
        self.func = func
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.label = label
        self._primitive = primitive

        interior = np.linspace(alpha, beta, samples)[1:-1]
        values = np.asarray(func(interior), dtype=float) * np.ones_like(interior)
        if not np.all(np.isfinite(values)):
            raise HypothesisError(f"c is not finite on ({alpha}, {beta})")
        mismatch = np.nonzero((values == 0) | (np.sign(values) != np.sign(values[0])))[0]
        if len(mismatch):
            bad = interior[mismatch[0]]
            raise HypothesisError(f"c changes sign or vanishes inside ({alpha}, {beta}) near t={bad:.6g}")
        self.sign = 1.0 if values[0] > 0 else -1.0

    @classmethod
    def constant(cls, value: float, alpha: float, beta: float) -> "TimeCoefficient":
        return cls(lambda t: np.full_like(np.asarray(t, dtype=float), value), alpha, beta,
                   label=f"const:{value:g}", primitive=lambda t: value * t)

    @classmethod
    def lorentzian(cls, alpha: float, beta: float) -> "TimeCoefficient":
        """c(t) = 1/(1+t^2) with C(t) = arctan t"""
        return cls(lambda t: 1.0 / (1.0 + np.asarray(t, dtype=float) ** 2), alpha, beta,
                   label="lorentzian", primitive=np.arctan)

    @classmethod
    def from_expression(cls, text: str, alpha: float, beta: float) -> "TimeCoefficient":
        try:
            expression = sympy.sympify(text.replace("^", "**"), locals={"t": _T})
        except (sympy.SympifyError, SyntaxError) as e:
            raise ConfigError(f"cannot parse time coefficient '{text}': {str(e)}")
        if expression.free_symbols - {_T}:
            raise ConfigError(f"time coefficient '{text}' may only depend on t")
        primitive = None
        integral = sympy.integrate(expression, (_T, 0, _T))
        if not integral.has(sympy.Integral):
            primitive = sympy.lambdify(_T, integral, "numpy")
        return cls(sympy.lambdify(_T, expression, "numpy"), alpha, beta, label=text, primitive=primitive)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.asarray(self.func(t), dtype=float) * np.ones_like(t)

    def primitive(self, t: float) -> float:
        if self._primitive is not None:
            return float(self._primitive(t))
        value, _ = quad(lambda s: float(self(s)), 0.0, t, limit=200, epsabs=1e-13, epsrel=1e-12)
        return value

    def inverse_primitive(self, tau: float) -> float:
        """The t in [alpha, beta] with C(t) = tau"""
        lo, hi = self.primitive(self.alpha), self.primitive(self.beta)
        if tau == lo:
            return self.alpha
        if tau == hi:
            return self.beta
        if not min(lo, hi) <= tau <= max(lo, hi):
            raise HypothesisError(f"tau={tau} lies outside C([{self.alpha}, {self.beta}])")
        return brentq(lambda t: self.primitive(t) - tau, self.alpha, self.beta, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    def tau_interval(self):
        return self.primitive(self.alpha), self.primitive(self.beta)
