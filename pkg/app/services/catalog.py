import logging
from typing import Dict, List, Tuple

import sympy

from ..errors import SymbolError
from ..models.symbols import ClosedFormSymbol, PolynomialSymbol, RHO, RadialSymbol, Symbol, xi_symbols

logger = logging.getLogger(__name__)

# Cubic polynomials in two variables reduce to one of these by a linear change of variables
NORMAL_FORMS: Tuple[str, ...] = (
    "xi1^3",
    "xi1^3 + xi2^3",
    "xi1^3 - xi1*xi2^2",
    "xi1^3 + xi2^2",
    "xi1*xi2^2",
    "xi1*xi2^2 + xi1^2",
    "xi1^3 + xi1*xi2",
    "xi1^3 + xi2^3 + xi1*xi2",
    "xi1^3 - 3*xi1*xi2^2 + xi1^2 + xi2^2",
)


def _polynomial(text: str, dimension: int = 2) -> PolynomialSymbol:
    expression = sympy.sympify(text.replace("^", "**"), locals={str(v): v for v in xi_symbols(dimension)})
    return PolynomialSymbol.from_expression(expression, dimension, name=text)


def normal_form_catalog() -> List[Tuple[str, PolynomialSymbol]]:
    return [(name, _polynomial(name)) for name in NORMAL_FORMS]


def named_examples(dimension: int = 2, order: int = 3) -> Dict[str, Symbol]:
    """Named example symbols, addressable as `@name` in expressions"""
    xi = xi_symbols(dimension)
    squared = sum(v ** 2 for v in xi)
    examples: Dict[str, Symbol] = {
        "laplacian": PolynomialSymbol.from_expression(squared, dimension, name="|xi|^2"),
        "radial_quartic": RadialSymbol((RHO ** 2 - 1) ** 2, dimension, name="(|xi|^2-1)^2"),
        "quartic_plus_laplacian": PolynomialSymbol.from_expression(
            sum(v ** 4 for v in xi) + squared, dimension, name="xi1^4+...+xin^4+|xi|^2"
        ),
        "abs_power": ClosedFormSymbol(sympy.Abs(xi[0]) ** order, dimension, name=f"|xi1|^{order}"),
    }
    if dimension >= 2:
        examples["squared_product_ratio"] = ClosedFormSymbol(
            xi[0] ** 2 * xi[1] ** 2 / squared, dimension, name="xi1^2*xi2^2/|xi|^2"
        )
        examples["mixed_model"] = ClosedFormSymbol(
            xi[0] * sympy.Abs(xi[-1]) ** (order - 1), dimension, name=f"xi1*|xi{dimension}|^{order - 1}"
        )
    return examples


def catalog_symbol(name: str, dimension: int = 2) -> Symbol:
    """Look up a normal form by its expression text or a named example by identifier"""
    if name in NORMAL_FORMS:
        if dimension != 2:
            raise SymbolError(f"normal form '{name}' is defined in two variables, not {dimension}")
        return _polynomial(name)
    examples = named_examples(dimension)
    if name not in examples:
        raise SymbolError(f"unknown catalog entry '{name}'; known: {sorted(examples)}")
    return examples[name]
