import numpy as np
import pytest

from app.errors import HypothesisError, NyquistError
from app.models.fields import ComplexField
from app.models.frequency_maps import CutoffSpec, LinearMap, RadialWarp, smoothstep
from app.models.schemas import GridSpec, SmootherSpec, WeightSpec
from app.services.expression_parser import parse_symbol
from app.services.spectral_service import band_support

PLANE = GridSpec.uniform(2, 16.0, 32)


def wave(grid, k):
    x = np.arange(grid.points[0]) * grid.spacing[0] - grid.lengths[0] / 2
    return ComplexField(grid, np.exp(1j * k * x))


def test_smoothstep_is_a_clipped_ramp():
    np.testing.assert_allclose(smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0])), [0.0, 0.0, 0.5, 1.0, 1.0])


def test_ball_cutoff_levels():
    gamma = CutoffSpec("ball", dimension=2, inner=1.0, outer=2.0)
    np.testing.assert_allclose(gamma.evaluate(np.array([[0.5, 0.0], [0.0, 1.5], [3.0, 0.0]])), [1.0, 0.5, 0.0])
    assert gamma.is_compact
    assert not gamma.is_homogeneous


def test_shear_has_an_integer_lattice_matrix():
    np.testing.assert_array_equal(LinearMap.shear(1.0).lattice_matrix((16.0, 16.0)), [[1, 1], [0, 1]])
    assert LinearMap.rotation(0.3).lattice_matrix((16.0, 16.0)) is None


def test_identity_leaves_fields_unchanged(canonical, spectral):
    u = spectral.random_band_limited(PLANE, band_support(3.0), seed=0)
    image = canonical.apply_I(LinearMap.identity(2), CutoffSpec("full", dimension=2), u)
    np.testing.assert_allclose(image.values, u.values, atol=1e-12)


def test_inverse_undoes_the_transform(canonical, spectral):
    psi = LinearMap.shear(1.0)
    gamma = CutoffSpec("ball", dimension=2, inner=1.0, outer=2.0)
    u = spectral.random_band_limited(PLANE, lambda xi: np.linalg.norm(psi.inverse(xi), axis=-1) <= 1.0, seed=1)
    back = canonical.apply_I_inverse(psi, gamma, canonical.apply_I(psi, gamma, u))
    np.testing.assert_allclose(back.values, u.values, atol=1e-12)


def test_dilation_moves_modes_inward(canonical, torus_grid):
    gamma = CutoffSpec("ball", dimension=1, inner=2.5, outer=3.5)
    image = canonical.apply_I(LinearMap.scaling(2.0), gamma, wave(torus_grid, 2))
    np.testing.assert_allclose(image.values, wave(torus_grid, 1).values, atol=1e-12)


def test_images_outside_the_box_are_rejected(canonical, torus_grid):
    with pytest.raises(NyquistError):
        canonical.apply_I(LinearMap.scaling(2.0), CutoffSpec("full", dimension=1), wave(torus_grid, 1))


def test_radial_warp_resamples_smoothly(canonical, spectral):
    psi = RadialWarp.scale(2, 1.0)
    gamma = CutoffSpec("ball", dimension=2, inner=1.0, outer=2.0)
    u = spectral.random_band_limited(PLANE, band_support(3.0), seed=2)
    image = canonical.apply_I(psi, gamma, u)
    expected = canonical.apply_I(LinearMap.identity(2), gamma, u)
    np.testing.assert_allclose(image.values, expected.values, atol=1e-10)


def test_boundedness_of_identity_is_one(canonical):
    result = canonical.boundedness_probe(LinearMap.identity(2), CutoffSpec("full", dimension=2), 0.0, PLANE, ensemble_size=4)
    assert result["norm"] == pytest.approx(1.0, rel=1e-12)
    assert result["guarantee"] == "homogeneous-weighted"
    assert result["determinant_window"] == pytest.approx(1.0)


def test_dense_norm_of_identity(canonical, torus_grid):
    norm = canonical.operator_norm_dense(LinearMap.identity(1), CutoffSpec("full", dimension=1), 1.0, torus_grid)
    assert norm == pytest.approx(1.0, rel=1e-10)


def test_compact_cutoff_guarantee(canonical):
    gamma = CutoffSpec("ball", dimension=2, inner=1.0, outer=2.0)
    assert canonical.guarantee(LinearMap.shear(1.0), gamma, 3.0) == "bounded-derivatives"
    assert canonical.guarantee(RadialWarp.cubic(2, 0.5), CutoffSpec("full", dimension=2), 0.0) is None


def test_q_sup_of_identity_is_the_cutoff_maximum(canonical):
    sigma = parse_symbol("xi1^2 + xi2^2")
    gamma = CutoffSpec("ball", dimension=2, inner=1.0, outer=2.0)
    q = canonical.q_sup(sigma, LinearMap.identity(2), gamma, SmootherSpec(kind="invariant_power"), PLANE)
    assert q == pytest.approx(1.0, rel=1e-12)


def test_equivalence_under_identity_is_exact(canonical):
    sigma = parse_symbol("xi1^2 + xi2^2")
    gamma = CutoffSpec("ball", dimension=2, inner=1.0, outer=2.0)
    study = canonical.equivalence_study(
        sigma,
        LinearMap.identity(2),
        gamma,
        SmootherSpec(kind="invariant_power"),
        WeightSpec(kind="bracket", parameter=1.0),
        PLANE,
        T=2.0,
        time_samples=16,
        ensemble_size=2,
    )
    assert study["band"] == pytest.approx(1.0, rel=1e-10)
    assert not study["flagged"]


@pytest.mark.slow
def test_equivalence_band_under_shear(canonical):
    sigma = parse_symbol("xi1^2 + xi2^2")
    gamma = CutoffSpec("ball", dimension=2, inner=1.0, outer=2.0)
    study = canonical.equivalence_study(
        sigma,
        LinearMap.shear(1.0),
        gamma,
        SmootherSpec(kind="invariant_power"),
        WeightSpec(kind="bracket", parameter=1.0),
        GridSpec.uniform(2, 16.0, 64),
        T=2.0,
        time_samples=32,
    )
    assert study["band"] < 5.0
    assert np.isfinite(study["q_sup"])


def test_rank_is_invariant_under_linear_maps(canonical):
    rows = canonical.rank_invariance_check(parse_symbol("xi1^3 + xi2^3 + xi1*xi2"), LinearMap.shear(1.0))
    assert len(rows) == 2
    assert all(row["equal"] and row["rank_a"] == 2 for row in rows)


def test_rank_check_needs_a_linear_map(canonical):
    with pytest.raises(HypothesisError):
        canonical.rank_invariance_check(parse_symbol("xi1^2 + xi2^2"), RadialWarp.cubic(2, 0.1))


def test_shear_ensemble_norm_stays_below_the_dense_norm(canonical):
    psi = LinearMap.shear(1.0)
    gamma = CutoffSpec("ball", dimension=2, inner=1.0, outer=2.0)
    sampled = canonical.boundedness_probe(psi, gamma, 1.0, PLANE, ensemble_size=8)
    dense = canonical.operator_norm_dense(psi, gamma, 1.0, PLANE)
    assert np.isfinite(dense)
    assert 0.0 < sampled["norm"] <= dense * (1 + 1e-9)
    assert sampled["guarantee"] == "bounded-derivatives"


def test_rank_is_invariant_under_rotation(canonical):
    psi = LinearMap.rotation(np.pi / 4)
    sigma = parse_symbol("xi1^2", dimension=2)
    points = psi.inverse(np.array([[0.0, 0.0], [0.0, 1.0], [0.0, -2.5]]))
    rows = canonical.rank_invariance_check(sigma, psi, critical_points=points)
    assert [row["rank_a"] for row in rows] == [1, 1, 1]
    assert all(row["equal"] for row in rows)
    searched = canonical.rank_invariance_check(sigma, psi)
    assert searched
    assert all(row["equal"] and row["rank_a"] == 1 for row in searched)


@pytest.mark.slow
def test_equivalence_band_under_shear_survives_refinement(canonical):
    sigma = parse_symbol("xi1^2 + xi2^2")
    gamma = CutoffSpec("ball", dimension=2, inner=1.0, outer=2.0)
    bands = []
    for points in (64, 128):
        study = canonical.equivalence_study(
            sigma,
            LinearMap.shear(1.0),
            gamma,
            SmootherSpec(kind="invariant_power"),
            WeightSpec(kind="bracket", parameter=1.0),
            GridSpec.uniform(2, 16.0, points),
            T=2.0,
            time_samples=32,
            ensemble_size=16,
        )
        bands.append(study["band"])
    assert max(bands) < 5.0
    assert bands[1] == pytest.approx(bands[0], rel=0.2)
