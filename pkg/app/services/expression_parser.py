"""Symbol expression mini-language.

Grammar (whitespace-insensitive):
  expression := polynomial or closed form in xi1, xi2, xi3 using + - * / ^ ( ) and numbers
              | radial profile in rho, optionally wrapped as radial(<expr in rho>)
              | @<name> for a catalog entry (normal forms by their text, named examples by identifier)
Functions: abs, sqrt, exp. Constant: pi.
"""
import re
import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
import sympy
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from ..errors import ExpressionParseError, SymbolError
from ..models.symbols import RHO, ClosedFormSymbol, PolynomialSymbol, RadialSymbol, Symbol, xi_symbols
from .catalog import NORMAL_FORMS, catalog_symbol

logger = logging.getLogger(__name__)

_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)
_FUNCTIONS = {"abs": sympy.Abs, "sqrt": sympy.sqrt, "exp": sympy.exp}
_XI = re.compile(r"xi([1-9])$")
_TRANSFORMS = standard_transformations + (convert_xor,)


def tokenize(text: str) -> List[Tuple[str, str, int]]:
    """Split into (kind, value, position) tokens, rejecting unknown characters and names"""
    tokens = []
    position = 0
    depth = 0
    while position < len(text):
        if text[position:].strip() == "":
            break
        match = _TOKEN.match(text, position)
        if not match or match.end() == position:
            column = position + len(text[position:]) - len(text[position:].lstrip())
            raise ExpressionParseError(f"unexpected character '{text[column]}'", text, column)
        kind = match.lastgroup
        value = match.group(kind)
        start = match.start(kind)
        if kind == "name" and value not in _FUNCTIONS and value not in ("rho", "pi", "radial") and not _XI.match(value):
            raise ExpressionParseError(f"unknown name '{value}'", text, start)
        if value == "(":
            depth += 1
        elif value == ")":
            depth -= 1
            if depth < 0:
                raise ExpressionParseError("unbalanced ')'", text, start)
        tokens.append((kind, value, start))
        position = match.end()
    if not tokens:
        raise ExpressionParseError("empty expression", text, 0)
    if depth > 0:
        raise ExpressionParseError("missing ')'", text, len(text))
    return tokens


def _parse(text: str, local_dict: dict) -> sympy.Expr:
    try:
        return parse_expr(text, local_dict=local_dict, transformations=_TRANSFORMS, evaluate=True)
    except SyntaxError as e:
        offset = max((e.offset or 1) - 1, 0)
        raise ExpressionParseError(f"syntax error: {e.msg}", text, min(offset, len(text)))
    except (TypeError, ValueError, sympy.SympifyError) as e:
        raise ExpressionParseError(f"cannot interpret expression: {str(e)}", text, 0)


def parse_symbol(text: str, dimension: Optional[int] = None) -> Symbol:
    """Build a Symbol from the mini-language; the dimension defaults to the largest xi index used"""
    text = text.strip()
    if text.startswith("@"):
        name = text[1:].strip()
        try:
            return catalog_symbol(name, dimension or (2 if name in NORMAL_FORMS else 1))
        except SymbolError as e:
            raise ExpressionParseError(str(e), text, 1)

    tokens = tokenize(text)
    names = {value for kind, value, _ in tokens if kind == "name"}
    indices = [int(_XI.match(n).group(1)) for n in names if _XI.match(n)]
    radial = "rho" in names or "radial" in names

    if radial:
        if indices:
            position = next(p for kind, value, p in tokens if _XI.match(value))
            raise ExpressionParseError("cannot mix rho and xi variables", text, position)
        body = text
        match = re.fullmatch(r"\s*radial\s*\((.*)\)\s*", text)
        if match:
            body = match.group(1)
        elif "radial" in names:
            position = next(p for kind, value, p in tokens if value == "radial")
            raise ExpressionParseError("radial(...) must wrap the whole expression", text, position)
        local = {"rho": RHO, "pi": sympy.pi, **_FUNCTIONS}
        profile = _parse(body, local)
        logger.debug(f"Parsed radial profile {profile}")
        try:
            return RadialSymbol(profile, dimension or 1, name=text)
        except SymbolError as e:
            raise ExpressionParseError(str(e), text, 0)

    inferred = max(indices, default=1)
    if dimension is None:
        dimension = inferred
    elif inferred > dimension:
        position = next(p for kind, value, p in tokens if _XI.match(value) and int(value[2:]) > dimension)
        raise ExpressionParseError(f"variable xi{inferred} exceeds dimension {dimension}", text, position)
    variables = xi_symbols(dimension)
    local = {str(v): v for v in variables}
    local.update({"pi": sympy.pi, **_FUNCTIONS})
    expression = _parse(text, local)
    try:
        if expression.is_polynomial(*variables):
            return PolynomialSymbol.from_expression(expression, dimension, name=text)
        return ClosedFormSymbol(expression, dimension, name=text)
    except SymbolError as e:
        raise ExpressionParseError(str(e), text, 0)


def parse_profile(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """One-variable profile in rho, e.g. a smoother sigma(rho) of a comparison case"""
    tokens = tokenize(text)
    for kind, value, position in tokens:
        if kind == "name" and value not in _FUNCTIONS and value not in ("rho", "pi"):
            raise ExpressionParseError(f"profiles depend on rho only, found '{value}'", text, position)
    expression = _parse(text, {"rho": RHO, "pi": sympy.pi, **_FUNCTIONS})
    func = sympy.lambdify(RHO, expression, "numpy")
    return lambda rho: np.asarray(func(rho), dtype=float) * np.ones_like(rho, dtype=float)
