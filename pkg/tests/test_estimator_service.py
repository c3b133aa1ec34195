import logging

import numpy as np
import pytest

from app.errors import ConfigError, FieldError, HypothesisError
from app.models.fields import ComplexField
from app.models.schemas import EstimateSpec, GridSpec, SmootherSpec, WeightSpec
from app.models.time_coefficients import TimeCoefficient
from app.services.estimator_service import EstimatorService, member_seed, ordered_map, trapezoid_weights
from app.services.expression_parser import parse_symbol
from app.services.spectral_service import band_support


def translation_spec(T=20.0, time_samples=257):
    return EstimateSpec(
        weight=WeightSpec(kind="bracket", parameter=1.0),
        smoother=SmootherSpec(kind="unit"),
        T=T,
        time_samples=time_samples,
    )


def dispersive_spec(kind="invariant_power", T=5.0, time_samples=32):
    return EstimateSpec(
        weight=WeightSpec(kind="bracket", parameter=1.0),
        smoother=SmootherSpec(kind=kind, exponent=0.5),
        T=T,
        time_samples=time_samples,
    )


def test_member_seeds_are_stable():
    assert member_seed(3, 0) == member_seed(3, 0)
    assert member_seed(3, 0) != member_seed(3, 1)
    assert member_seed(3, 1) != member_seed(4, 1)


def test_ordered_map_keeps_input_order():
    assert ordered_map(lambda x: x * x, range(10), workers=4) == [x * x for x in range(10)]


def test_trapezoid_weights_integrate_linear_functions():
    times, weights = trapezoid_weights(-1.0, 3.0, 17)
    assert np.sum(weights) == pytest.approx(4.0)
    assert np.dot(weights, times) == pytest.approx(4.0)


def test_translation_ratio_matches_closed_form(estimator, spectral, line_grid):
    # a full period of translation visits every shift once
    phi = spectral.random_band_limited(line_grid, band_support(5.0), seed=3)
    ratio = estimator.smoothing_ratio(parse_symbol("xi1"), translation_spec(), phi)
    assert ratio == pytest.approx(np.sqrt(2 * np.arctan(20.0)), abs=1e-3)


def test_translation_operator_is_scalar(estimator, spectral, line_grid):
    a = parse_symbol("xi1")
    phi = spectral.random_band_limited(line_grid, band_support(5.0), seed=3)
    ratio = estimator.smoothing_ratio(a, translation_spec(), phi)
    estimate = estimator.estimate_constant(a, translation_spec(), line_grid)
    assert estimate.converged
    assert estimate.value == pytest.approx(ratio, rel=1e-10)


def test_ratio_is_scale_invariant(estimator, spectral, line_grid):
    a = parse_symbol("xi1^2")
    phi = spectral.random_band_limited(line_grid, band_support(4.0), seed=5)
    spec = dispersive_spec()
    assert estimator.smoothing_ratio(a, spec, 3.0 * phi) == pytest.approx(estimator.smoothing_ratio(a, spec, phi), rel=1e-12)


def test_smoother_scale_multiplies_the_norm(estimator, spectral, line_grid):
    a = parse_symbol("xi1^2")
    phi = spectral.random_band_limited(line_grid, band_support(4.0), seed=5)
    spec = dispersive_spec()
    doubled = spec.model_copy(update={"smoother": SmootherSpec(kind="invariant_power", exponent=0.5, scale=2.0)})
    assert estimator.spacetime_norm(a, doubled, phi) == pytest.approx(2 * estimator.spacetime_norm(a, spec, phi), rel=1e-12)


def test_invariant_smoother_of_square_is_root_two_classical(estimator, spectral, line_grid):
    # |d/dxi xi^2|^{1/2} = sqrt(2) |xi|^{1/2}
    a = parse_symbol("xi1^2")
    phi = spectral.random_band_limited(line_grid, band_support(4.0), seed=6)
    invariant = estimator.spacetime_norm(a, dispersive_spec("invariant_power"), phi)
    classical = estimator.spacetime_norm(a, dispersive_spec("classical"), phi)
    assert invariant / classical == pytest.approx(np.sqrt(2.0), rel=1e-12)


def test_zero_field_is_rejected(estimator, line_grid):
    with pytest.raises(FieldError):
        estimator.smoothing_ratio(parse_symbol("xi1^2"), dispersive_spec(), ComplexField(line_grid, np.zeros(line_grid.shape)))


def test_symbol_and_grid_dimensions_must_agree(estimator, spectral, line_grid):
    phi = spectral.random_band_limited(line_grid, band_support(4.0), seed=0)
    with pytest.raises(ConfigError):
        estimator.spacetime_norm(parse_symbol("xi1^2 + xi2^2"), dispersive_spec(), phi)


def test_weight_outside_admissible_range_is_logged(estimator, spectral, line_grid, caplog):
    phi = spectral.random_band_limited(line_grid, band_support(4.0), seed=0)
    spec = dispersive_spec().model_copy(update={"weight": WeightSpec(kind="bracket", parameter=0.25)})
    with caplog.at_level(logging.WARNING):
        estimator.spacetime_norm(parse_symbol("xi1^2"), spec, phi)
    assert "admissible range" in caplog.text


def test_power_iteration_matches_dense_operator(estimator):
    grid = GridSpec.uniform(1, 20.0, 64)
    a = parse_symbol("xi1^2")
    spec = dispersive_spec("classical", T=5.0, time_samples=33)
    support = band_support(0.5 * grid.nyquist[0], exclude_origin=True)
    matrix, indices = estimator.smoothing_operator(a, spec, grid, support)
    assert np.max(np.abs(matrix - matrix.conj().T)) < 1e-10 * np.max(np.abs(matrix))
    top = np.sqrt(np.linalg.eigvalsh(0.5 * (matrix + matrix.conj().T))[-1])
    estimate = estimator.estimate_constant(a, spec, grid, support=support, max_iterations=2000, tolerance=1e-12)
    assert estimate.value == pytest.approx(top, rel=1e-4)
    assert estimate.value <= top * (1 + 1e-10)


def test_power_iteration_dominates_the_ensemble(estimator):
    grid = GridSpec.uniform(1, 20.0, 64)
    a = parse_symbol("xi1^2")
    spec = dispersive_spec("classical", T=5.0, time_samples=33)
    support = band_support(0.5 * grid.nyquist[0], exclude_origin=True)
    power = estimator.estimate_constant(a, spec, grid, support=support)
    ensemble = estimator.estimate_constant(a, spec, grid, method="ensemble", support=support, ensemble_size=8)
    assert ensemble.method == "ensemble"
    assert len(ensemble.history) == 8
    assert ensemble.value <= power.value * (1 + 1e-6)


def test_estimates_do_not_depend_on_worker_count(spectral):
    grid = GridSpec.uniform(1, 20.0, 64)
    a = parse_symbol("xi1^3")
    spec = dispersive_spec(T=3.0)
    support = band_support(5.0, exclude_origin=True)
    serial = EstimatorService(spectral, workers=1).estimate_constant(a, spec, grid, seed=9, support=support)
    threaded = EstimatorService(spectral, workers=4).estimate_constant(a, spec, grid, seed=9, support=support)
    assert serial.value == threaded.value
    assert serial.fingerprint == threaded.fingerprint


def test_unknown_method(estimator, line_grid):
    with pytest.raises(ConfigError):
        estimator.estimate_constant(parse_symbol("xi1^2"), dispersive_spec(), line_grid, method="guess")


def test_hoshiro_smoother_is_dominated():
    grid = GridSpec.uniform(1, 20.0, 64)
    result = EstimatorService(workers=1).hoshiro_comparison(parse_symbol("xi1^2"), dispersive_spec(T=5.0), grid)
    assert result["dominated"]
    assert result["hoshiro"] <= result["bound"] * (1 + 1e-6)


def test_hoshiro_comparison_needs_homogeneity(estimator):
    grid = GridSpec.uniform(1, 20.0, 64)
    with pytest.raises(HypothesisError):
        estimator.hoshiro_comparison(parse_symbol("xi1^2 + xi1"), dispersive_spec(), grid)


def test_constant_coefficient_matches_rescaled_window(estimator, spectral, line_grid):
    a = parse_symbol("xi1^2")
    spec = dispersive_spec(T=4.0, time_samples=64)
    phi = spectral.random_band_limited(line_grid, band_support(3.0), seed=2)
    c = TimeCoefficient.constant(2.0, -spec.T / 2, spec.T / 2)
    assert estimator.timedep_norm(a, c, spec, phi) == pytest.approx(estimator.spacetime_norm(a, spec, phi), rel=1e-12)


def test_lorentzian_reparametrization(estimator, spectral, line_grid):
    a = parse_symbol("xi1^2")
    spec = dispersive_spec(time_samples=2001)
    phi = spectral.random_band_limited(line_grid, band_support(2.0), seed=2)
    c = TimeCoefficient.lorentzian(0.0, 50.0)
    reparametrized = estimator.timedep_norm(a, c, spec, phi)
    reference = estimator.spacetime_norm(a, spec, phi, interval=(0.0, np.arctan(50.0)))
    assert reparametrized == pytest.approx(reference, rel=1e-4)
    direct = estimator.timedep_norm(a, c, spec, phi, sampling="direct")
    assert direct == pytest.approx(reparametrized, rel=1e-2)


def test_timedep_nodes_are_equispaced_for_constants(estimator):
    c = TimeCoefficient.constant(2.0, -1.0, 1.0)
    np.testing.assert_allclose(estimator.timedep_nodes(c, 5), np.linspace(-1.0, 1.0, 5), atol=1e-12)


@pytest.mark.slow
def test_refinement_ladder_is_stable(estimator):
    a = parse_symbol("(rho^2-1)^2")
    spec = dispersive_spec(T=8.0, time_samples=64)
    grids = [GridSpec.uniform(1, 32.0, n) for n in (256, 512, 1024)]
    rows = estimator.refinement_study(a, spec, grids)
    constants = [row["constant"] for row in rows]
    assert len(rows) == 3
    assert max(constants) / min(constants) < 1.1


@pytest.mark.slow
def test_refinement_of_degenerate_monomial_in_two_dimensions(estimator):
    a = parse_symbol("xi1*xi2^2")
    spec = dispersive_spec(T=2.0, time_samples=16)
    grids = [GridSpec.uniform(2, 16.0, n) for n in (128, 256)]
    rows = estimator.refinement_study(a, spec, grids, band_limit=4.0)
    constants = [row["constant"] for row in rows]
    assert [row["N"] for row in rows] == [128, 256]
    assert max(constants) / min(constants) < 1.2


@pytest.mark.slow
def test_concentration_quotient_blows_up_like_inverse_root_width(estimator):
    a = parse_symbol("(rho^2-1)^2")
    specs = {
        "classical": dispersive_spec("classical", T=2.0, time_samples=64),
        "invariant": dispersive_spec("invariant_power", T=2.0, time_samples=64),
    }
    grid = GridSpec.uniform(1, 1024.0, 1024)
    study = estimator.concentration_study(a, specs, [0.2, 0.1, 0.05, 0.025], 1.0, grid)
    assert len(study["rows"]) == 4
    assert study["slope"] == pytest.approx(-0.5, abs=0.15)
    # the invariant smoother keeps a width-uniform constant
    assert study["invariant_spread"] < 0.2


def test_concentration_window_follows_band_speed(estimator):
    a = parse_symbol("(rho^2-1)^2")
    specs = {
        "classical": dispersive_spec("classical", T=2.0, time_samples=16),
        "invariant": dispersive_spec("invariant_power", T=2.0, time_samples=16),
    }
    grid = GridSpec.uniform(1, 256.0, 256)
    xi = estimator.spectral.frequency_mesh(grid)[..., 0]
    study = estimator.concentration_study(a, specs, [0.2, 0.1], 1.0, grid, method="ensemble", ensemble_size=2)
    for row in study["rows"]:
        band = xi[(np.abs(np.abs(xi) - 1.0) < row["width"]) & (xi != 0)]
        speed = np.max(np.abs(4 * band * (band ** 2 - 1)))
        assert row["T"] == pytest.approx(8.0 / (row["width"] * speed), rel=1e-9)

    fixed = estimator.concentration_study(
        a, specs, [0.2, 0.1], 1.0, grid, method="ensemble", ensemble_size=2, window_scale=0.0
    )
    assert [row["T"] for row in fixed["rows"]] == [2.0, 2.0]
