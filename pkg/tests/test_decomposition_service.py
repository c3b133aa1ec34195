import numpy as np
import pytest

from app.errors import SymbolError
from app.models.schemas import GridSpec
from app.services.catalog import named_examples, normal_form_catalog
from app.services.decomposition_service import real_roots
from app.services.expression_parser import parse_symbol
from app.services.spectral_service import band_support


def test_real_roots_merge_double_roots():
    np.testing.assert_allclose(real_roots(np.array([-2.0, 1.0, 1.0])), [-2.0, 1.0], atol=1e-12)
    np.testing.assert_array_equal(real_roots(np.array([0.0, 0.0, 3.0])), [0.0])
    assert real_roots(np.array([1.0, 0.0, 1.0])).size == 0
    assert real_roots(np.array([5.0])).size == 0


def test_cubic_splits_into_three_pieces(decomposition):
    grid = GridSpec.uniform(1, 32.0, 256)
    result = decomposition.monotone_decomposition(parse_symbol("xi1^3 - xi1"), 0, grid)
    assert result.breakpoints == pytest.approx([-1 / np.sqrt(3), 1 / np.sqrt(3)], abs=1e-12)
    assert len(result.pieces) == 3
    assert result.sign_consistent
    xi = decomposition.spectral.frequency_mesh(grid)[..., 0]
    assert np.all(result.labels[xi < -0.6] == 0)
    assert np.all(result.labels[np.abs(xi) < 0.5] == 1)
    assert np.all(result.labels[xi > 0.6] == 2)


def test_linear_symbol_is_one_piece(decomposition):
    grid = GridSpec.uniform(1, 32.0, 256)
    result = decomposition.monotone_decomposition(parse_symbol("xi1"), 0, grid)
    assert result.breakpoints == []
    assert len(result.pieces) == 1
    assert np.all(result.labels == 0)


def test_two_dimensional_decomposition(decomposition):
    grid = GridSpec.uniform(2, 8.0, 16)
    a = parse_symbol("xi1^3 + xi2^3 - xi1")
    first = decomposition.monotone_decomposition(a, 0, grid)
    assert first.breakpoints == pytest.approx([-1 / np.sqrt(3), 1 / np.sqrt(3)], abs=1e-12)
    assert len(first.pieces) == 3
    second = decomposition.monotone_decomposition(a, 1, grid)
    assert second.breakpoints == pytest.approx([0.0], abs=1e-12)
    assert len(second.pieces) == 2
    xi2 = decomposition.spectral.frequency_mesh(grid)[..., 1]
    assert np.all(second.labels[xi2 == 0] == -1)


def test_combiner_value(decomposition):
    eta = decomposition.combiner(parse_symbol("xi1*xi2^2"), np.array([1.0, 1.0]))
    assert float(eta) == pytest.approx(5 ** 0.25 / (1 + np.sqrt(2.0)), rel=1e-12)


def test_combiner_stays_in_unit_interval(decomposition):
    grid = GridSpec.uniform(2, 8.0, 16)
    result = decomposition.monotone_decomposition(parse_symbol("xi1^3 + xi2^3 + xi1*xi2"), 0, grid)
    assert 0.0 <= result.eta.min()
    assert result.eta_max <= 1.0 + 1e-12


def test_non_polynomial_symbol_is_rejected(decomposition):
    with pytest.raises(SymbolError):
        decomposition.monotone_decomposition(parse_symbol("abs(xi1)^3"), 0, GridSpec.uniform(1, 32.0, 256))


def test_axis_must_exist(decomposition):
    with pytest.raises(SymbolError):
        decomposition.monotone_decomposition(parse_symbol("xi1^3"), 1, GridSpec.uniform(1, 32.0, 256))


def test_assembled_estimate_is_bounded_by_axis_sum(decomposition, spectral):
    grid = GridSpec.uniform(2, 8.0, 16)
    phi = spectral.random_band_limited(grid, band_support(0.5 * min(grid.nyquist)), seed=4)
    result = decomposition.assemble_polynomial_estimate(parse_symbol("xi1^3 + xi2^3"), 1.0, phi, T=2.0, time_samples=16)
    assert result["holds"]
    assert result["combined"] <= result["bound"] * (1 + 1e-9)
    assert [row["pieces"] for row in result["axes"]] == [2, 2]
    assert len(result["pieces"]) == 4


def _catalog_polynomials():
    polynomials = [a for _, a in normal_form_catalog()]
    examples = named_examples(2)
    polynomials += [examples["laplacian"], examples["quartic_plus_laplacian"], examples["radial_quartic"].as_polynomial()]
    return polynomials


@pytest.mark.parametrize("a", _catalog_polynomials(), ids=lambda a: a.name)
def test_combiner_is_at_most_one_on_the_catalog(decomposition, a):
    grid = GridSpec.uniform(2, 8.0, 16)
    for axis in range(2):
        result = decomposition.monotone_decomposition(a, axis, grid)
        assert 0.0 <= result.eta.min()
        assert result.eta_max <= 1.0 + 1e-12


def test_assembled_estimate_is_stable_under_refinement(decomposition, spectral):
    a = parse_symbol("xi1*xi2^2")
    results = []
    for points in (32, 64):
        grid = GridSpec.uniform(2, 8.0, points)
        phi = spectral.random_band_limited(grid, band_support(3.0), seed=2)
        results.append(decomposition.assemble_polynomial_estimate(a, 1.0, phi, T=1.0, time_samples=16))
    coarse, fine = results
    assert coarse["holds"] and fine["holds"]
    assert fine["combined"] == pytest.approx(coarse["combined"], rel=2e-2)
    assert fine["bound"] == pytest.approx(coarse["bound"], rel=2e-2)
