import numpy as np
import pytest

from app.errors import ExpressionParseError
from app.models.symbols import ClosedFormSymbol, PolynomialSymbol, RadialSymbol
from app.services.expression_parser import parse_profile, parse_symbol, tokenize


def test_polynomial_infers_dimension_and_order():
    a = parse_symbol("xi1^3 + xi2^3 - xi1")
    assert isinstance(a, PolynomialSymbol)
    assert a.dimension == 2
    assert a.order == 3
    assert not a.is_homogeneous
    assert a.evaluate(np.array([1.0, 2.0])) == pytest.approx(8.0)
    assert a.principal_part.evaluate(np.array([1.0, 2.0])) == pytest.approx(9.0)


def test_explicit_dimension_pads_variables():
    a = parse_symbol("xi1**2", dimension=3)
    assert a.dimension == 3
    np.testing.assert_allclose(a.gradient(np.array([2.0, 5.0, -1.0])), [4.0, 0.0, 0.0])


def test_radial_profile():
    a = parse_symbol("radial((rho^2-1)^2)", dimension=2)
    assert isinstance(a, RadialSymbol)
    assert a.order == 4
    assert a.evaluate(np.array([0.0, 2.0])) == pytest.approx(9.0)


def test_closed_form_with_abs_is_homogeneous():
    a = parse_symbol("abs(xi1)^3")
    assert isinstance(a, ClosedFormSymbol)
    assert a.is_homogeneous
    assert a.order == pytest.approx(3.0)
    np.testing.assert_allclose(a.gradient(np.array([[-2.0]])), [[-12.0]])


def test_catalog_reference():
    a = parse_symbol("@laplacian", dimension=2)
    assert a.evaluate(np.array([3.0, 4.0])) == pytest.approx(25.0)


@pytest.mark.parametrize(
    "text, position",
    [
        ("xi1 + zeta", 6),
        ("xi1 $ 2", 4),
        ("(xi1 + 1", 8),
        ("xi1 + 1)", 7),
    ],
)
def test_parse_errors_report_the_column(text, position):
    with pytest.raises(ExpressionParseError) as info:
        parse_symbol(text)
    assert info.value.position == position
    assert info.value.expression == text


def test_variable_beyond_dimension_is_rejected():
    with pytest.raises(ExpressionParseError) as info:
        parse_symbol("xi1 + xi3", dimension=2)
    assert info.value.position == 6


def test_rho_and_xi_cannot_mix():
    with pytest.raises(ExpressionParseError):
        parse_symbol("rho + xi1")


def test_empty_expression():
    with pytest.raises(ExpressionParseError):
        parse_symbol("   ")


def test_parse_error_is_a_config_error():
    from app.errors import ConfigError

    with pytest.raises(ConfigError):
        parse_symbol("xi1 +* ")


def test_tokens_carry_positions():
    tokens = tokenize("xi1^2 + 3")
    assert [(kind, value, start) for kind, value, start in tokens] == [
        ("name", "xi1", 0),
        ("op", "^", 3),
        ("number", "2", 4),
        ("op", "+", 6),
        ("number", "3", 8),
    ]


def test_profile_is_vectorized():
    sigma = parse_profile("sqrt(rho)")
    np.testing.assert_allclose(sigma(np.array([0.0, 4.0, 9.0])), [0.0, 2.0, 3.0])
    constant = parse_profile("1/sqrt(3)")
    assert constant(np.array([1.0, 2.0])).shape == (2,)


def test_profile_rejects_xi():
    with pytest.raises(ExpressionParseError):
        parse_profile("xi1 + rho")
