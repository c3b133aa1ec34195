import numpy as np
import pytest

from app.errors import FieldError, GridError, HypothesisError
from app.models.schemas import GridSpec
from app.services.comparison_service import ComparisonCase
from app.services.estimator_service import member_seed
from app.services.expression_parser import parse_profile, parse_symbol
from app.services.spectral_service import band_support

MODEL_GRID = GridSpec.uniform(1, 4096.0, 8192)


def radial_case(f="rho^3", g="rho", sigma="rho", tau="1/sqrt(3)", support=(0.5, 2.0)):
    return ComparisonCase(
        f=parse_symbol(f),
        g=parse_symbol(g),
        sigma=parse_profile(sigma),
        tau=parse_profile(tau),
        support=support,
        label="test",
    )


def test_translation_norm_equals_l2_norm(comparison, spectral):
    grid = GridSpec.uniform(1, 64.0, 1024)
    phi = spectral.random_band_limited(grid, band_support(0.5 * grid.nyquist[0]), seed=0)
    assert comparison.translation_identity_check(phi, [0.0, 0.37, 1.1]) < 1e-10


def test_translation_identity_is_one_dimensional(comparison, spectral):
    grid = GridSpec.uniform(2, 8.0, 16)
    phi = spectral.random_band_limited(grid, band_support(2.0), seed=0)
    with pytest.raises(GridError):
        comparison.translation_identity_check(phi, [0.0])


def test_model_flows_differ_by_root_order_ratio(comparison, spectral):
    phi = spectral.random_smooth_packet(MODEL_GRID, (1.0,), 0.1, seed=0, one_sided_axis=0)
    result = comparison.model_equality_check(1.0, 3.0, phi)
    assert result["expected"] == pytest.approx(1 / np.sqrt(3.0))
    assert result["ratio"] == pytest.approx(result["expected"], rel=1e-4)


def test_model_flow_compared_with_itself(comparison, spectral):
    phi = spectral.random_smooth_packet(MODEL_GRID, (1.0,), 0.1, seed=1, one_sided_axis=0)
    result = comparison.model_equality_check(2.0, 2.0, phi, x=0.5)
    assert result["ratio"] == pytest.approx(1.0, rel=1e-12)


def test_model_check_needs_one_sided_data(comparison, spectral):
    grid = GridSpec.uniform(1, 64.0, 256)
    phi = spectral.random_band_limited(grid, band_support(2.0), seed=0)
    with pytest.raises(FieldError):
        comparison.model_equality_check(1.0, 3.0, phi)


def test_ratio_bound_of_cubic_against_translation(comparison):
    assert comparison.ratio_bound(radial_case(), MODEL_GRID) == pytest.approx(1.0, rel=1e-12)


def test_ratio_bound_requires_monotone_symbols(comparison):
    case = radial_case(f="xi1^3 - xi1", support=(0.2, 2.0))
    with pytest.raises(HypothesisError):
        comparison.ratio_bound(case, MODEL_GRID)


def test_radial_comparison_is_sharp(comparison, spectral):
    case = radial_case()
    phi = spectral.random_smooth_packet(MODEL_GRID, (1.25,), 1.5 / 14, seed=0, one_sided_axis=0)
    result = comparison.compare_radial(case, phi, [0.0, 0.7])
    assert result["A"] == pytest.approx(1.0, rel=1e-12)
    assert len(result["quotients"]) == 2
    assert result["worst"] == pytest.approx(1.0, abs=1e-3)


def test_radial_comparison_pairs_points(comparison, spectral):
    phi = spectral.random_smooth_packet(MODEL_GRID, (1.25,), 0.1, seed=0, one_sided_axis=0)
    with pytest.raises(HypothesisError):
        comparison.compare_radial(radial_case(), phi, [0.0, 1.0], x_tilde=[0.0])


def test_secondary_comparison_constant(comparison, spectral):
    grid = GridSpec.uniform(1, 32.0, 256)
    phi = spectral.random_band_limited(grid, band_support(0.5 * grid.nyquist[0]), seed=0)
    result = comparison.secondary_comparison_check(
        parse_symbol("rho^2"), parse_profile("sqrt(rho)"), (0.0, np.inf), 1.0, phi, T=8.0
    )
    assert result["A"] == pytest.approx(1 / np.sqrt(2.0), rel=1e-12)
    assert result["ratio"] > 0


def test_translation_identity_over_an_ensemble(comparison, spectral):
    grid = GridSpec.uniform(1, 64.0, 1024)
    support = band_support(0.5 * grid.nyquist[0])
    deviations = [
        comparison.translation_identity_check(spectral.random_band_limited(grid, support, seed=member_seed(11, k)), [0.0, 0.37])
        for k in range(32)
    ]
    assert max(deviations) < 1e-10


def test_two_dimensional_model_flows_agree(comparison, spectral):
    grid = GridSpec.uniform(2, 128.0, 512)
    phi = spectral.random_smooth_packet(grid, (0.0, 4.0), 0.4, seed=0)
    result = comparison.model_equality_check(1.0, 3.0, phi)
    assert result["expected"] == 1.0
    assert result["ratio"] == pytest.approx(1.0, abs=1e-3)


def test_two_dimensional_model_check_needs_data_off_the_axis(comparison, spectral):
    grid = GridSpec.uniform(2, 32.0, 64)
    phi = spectral.random_band_limited(grid, band_support(2.0), seed=0)
    with pytest.raises(FieldError):
        comparison.model_equality_check(1.0, 3.0, phi)
