import numpy as np
import pytest

from app.errors import FieldError, NyquistError, SupportError
from app.models.fields import ComplexField
from app.models.schemas import BandSpec, GridSpec
from app.services.expression_parser import parse_symbol
from app.services.spectral_service import band_support


def plane_wave(grid, k):
    x = np.arange(grid.points[0]) * grid.spacing[0] - grid.lengths[0] / 2
    return ComplexField(grid, np.exp(1j * k * x))


def test_lattice_is_fft_ordered(spectral):
    grid = GridSpec.uniform(1, 2 * np.pi, 8)
    xi = spectral.frequency_lattice(grid)[:, 0]
    np.testing.assert_allclose(xi, [0, 1, 2, 3, -4, -3, -2, -1])


def test_lattice_doubles_when_length_halves(spectral):
    grid = GridSpec.uniform(1, np.pi, 8)
    np.testing.assert_allclose(spectral.frequency_lattice(grid)[:, 0], [0, 2, 4, 6, -8, -6, -4, -2])


def test_constant_field_lives_on_the_zero_mode(spectral, torus_grid):
    field = ComplexField(torus_grid, np.ones(torus_grid.shape))
    spectrum = spectral.to_frequency(field).values
    assert spectrum[0] == pytest.approx(np.sqrt(16))
    assert np.max(np.abs(spectrum[1:])) < 1e-12


def test_transform_is_unitary(spectral):
    grid = GridSpec(dimension=2, lengths=(10.0, 6.0), points=(32, 16))
    rng = np.random.default_rng(4)
    field = ComplexField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    forward = spectral.transform(field, "forward")
    assert forward.norm() == pytest.approx(field.norm(), rel=1e-12)
    back = spectral.transform(forward, "inverse")
    assert np.max(np.abs(back.values - field.values)) < 1e-12


def test_transform_rejects_wrong_space(spectral, torus_grid):
    field = ComplexField(torus_grid, np.ones(torus_grid.shape))
    with pytest.raises(FieldError):
        spectral.transform(field, "inverse")


def test_multiplier_acts_on_plane_wave(spectral, torus_grid):
    wave = plane_wave(torus_grid, 1)
    image = spectral.apply_multiplier(wave, lambda xi: xi[..., 0])
    np.testing.assert_allclose(image.values, wave.values, atol=1e-12)


def test_invariant_multiplier_vanishes_on_the_unit_circle(spectral, torus_grid):
    a = parse_symbol("(rho^2-1)^2")
    values = spectral.multiplier_values(torus_grid, lambda xi: np.sqrt(np.linalg.norm(a.gradient(xi), axis=-1)))
    lattice = spectral.frequency_lattice(torus_grid)[:, 0]
    assert values[lattice == 1.0][0] == 0.0
    assert values[lattice == -1.0][0] == 0.0


def test_multiplier_must_be_finite(spectral, torus_grid):
    with pytest.raises(FieldError):
        spectral.multiplier_values(torus_grid, lambda xi: 1.0 / xi[..., 0])


def test_propagator_shifts_by_whole_cells(spectral, line_grid):
    phi = spectral.random_band_limited(line_grid, band_support(5.0), seed=1)
    shifted = spectral.propagate(phi, parse_symbol("xi1"), 5 * line_grid.spacing[0])
    np.testing.assert_allclose(shifted.values, np.roll(phi.values, -5), atol=1e-12)


def test_propagator_multiplies_eigenfunctions(spectral, torus_grid):
    wave = plane_wave(torus_grid, 2)
    u = spectral.propagate(wave, parse_symbol("xi1^2"), 0.7)
    np.testing.assert_allclose(u.values, np.exp(1j * 0.7 * 4) * wave.values, atol=1e-12)


def test_propagator_group_law_and_unitarity(spectral, line_grid):
    a = parse_symbol("xi1^3 - xi1")
    phi = spectral.random_band_limited(line_grid, band_support(4.0), seed=2)
    two_steps = spectral.propagate(spectral.propagate(phi, a, 0.3), a, 0.45)
    one_step = spectral.propagate(phi, a, 0.75)
    assert np.max(np.abs(two_steps.values - one_step.values)) < 1e-10
    assert one_step.norm() == pytest.approx(phi.norm(), rel=1e-12)


def test_band_split_keeps_constants_low(spectral, torus_grid):
    field = ComplexField(torus_grid, np.ones(torus_grid.shape))
    low, high = spectral.band_split(field, BandSpec(radius=1.0))
    np.testing.assert_allclose(low.values, field.values, atol=1e-12)
    assert np.max(np.abs(high.values)) < 1e-12


def test_band_split_sends_fast_modes_high(spectral, torus_grid):
    wave = plane_wave(torus_grid, 3)
    low, high = spectral.band_split(wave, BandSpec(radius=1.0))
    assert np.max(np.abs(low.values)) < 1e-12
    np.testing.assert_allclose((low + high).values, wave.values, atol=1e-12)


def test_band_split_checks_nyquist(spectral, torus_grid):
    with pytest.raises(NyquistError):
        spectral.band_split(plane_wave(torus_grid, 1), BandSpec(radius=5.0))


def test_random_band_limited_is_deterministic_and_normalized(spectral, line_grid):
    first = spectral.random_band_limited(line_grid, band_support(3.0), seed=7)
    second = spectral.random_band_limited(line_grid, band_support(3.0), seed=7)
    assert first.norm() == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_array_equal(first.values, second.values)
    spectrum = spectral.to_frequency(first).values
    lattice = spectral.frequency_lattice(line_grid)[:, 0]
    assert np.max(np.abs(spectrum[np.abs(lattice) > 3.0])) < 1e-12


def test_random_band_limited_is_refinement_consistent(spectral):
    coarse = spectral.random_band_limited(GridSpec.uniform(1, 40.0, 128), band_support(2.0), seed=11)
    fine = spectral.random_band_limited(GridSpec.uniform(1, 40.0, 256), band_support(2.0), seed=11)
    np.testing.assert_allclose(fine.values[::2], coarse.values, atol=1e-12)


def test_empty_support_is_rejected(spectral, line_grid):
    with pytest.raises(SupportError):
        spectral.random_band_limited(line_grid, lambda xi: np.linalg.norm(xi, axis=-1) > 1e6, seed=0)


def test_smooth_packet_can_be_one_sided(spectral, line_grid):
    packet = spectral.random_smooth_packet(line_grid, (1.0,), 0.3, seed=0, one_sided_axis=0)
    spectrum = spectral.to_frequency(packet).values
    lattice = spectral.frequency_lattice(line_grid)[:, 0]
    assert packet.norm() == pytest.approx(1.0, rel=1e-12)
    assert np.max(np.abs(spectrum[lattice <= 0])) < 1e-12


@pytest.mark.parametrize("text", ["1,10,7", "1,10,4", "1,-3,16"])
def test_grid_validation(text):
    with pytest.raises(ValueError):
        GridSpec.parse(text)


def test_grid_properties():
    grid = GridSpec.parse("2,8,16")
    assert grid.shape == (16, 16)
    assert grid.spacing == (0.5, 0.5)
    assert grid.cell_volume == 0.25
    assert grid.nyquist[0] == pytest.approx(2 * np.pi)
    assert grid.label() == "16x16@8x8"
