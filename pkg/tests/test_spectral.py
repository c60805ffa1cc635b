from __future__ import annotations

import math

import numpy as np
import pytest

from leakywire.birman_schwinger import assemble_Q, discretize, top_eigenvalues
from leakywire.errors import ConfigurationError, NumericalError, SingularityError
from leakywire.geometry import CircularArcJointConfig, reparametrize_arclength, shifted_curve_point
from leakywire.kernels import PSI1
from leakywire.spectral import (
    Coupling,
    default_radii,
    dispersion,
    eigenfunction,
    eigenfunction_on_plane,
    find_bound_states,
    kappa_alpha,
    refinement_study,
    single_layer,
    tail_decay_rate,
    threshold,
    verify_boundary_condition,
)


def arc_on_grid(bend_angle: float, half_length: float, num_points: int):
    spec = CircularArcJointConfig(bend_angle=bend_angle, radius=1.0)
    curve = reparametrize_arclength(spec, 2.0 * half_length / num_points)
    return discretize(curve, half_length, num_points)


@pytest.fixture(scope="module")
def arc_ground_state():
    curve, disc = arc_on_grid(math.pi / 3, 10.0, 512)
    states = find_bound_states(curve, 0.0, disc, 4.0 * kappa_alpha(0.0))
    return curve, disc, states


# region Threshold


def test_threshold_reference_values():
    assert threshold(PSI1 / (2 * math.pi)) == pytest.approx(-4.0, rel=1e-14)
    assert threshold(0.0) == pytest.approx(-1.26095, abs=1e-5)


def test_threshold_matches_kappa_alpha():
    for alpha in np.linspace(-2.0, 2.0, 50):
        assert threshold(alpha) == pytest.approx(-kappa_alpha(alpha) ** 2, rel=1e-13)


def test_threshold_is_increasing_in_alpha():
    values = [threshold(alpha) for alpha in np.linspace(-1.0, 1.0, 21)]
    assert np.all(np.diff(values) > 0.0)


def test_dispersion():
    assert dispersion(0.0, 0.0) == pytest.approx(threshold(0.0), rel=1e-15)
    assert dispersion(0.0, 1.0) == pytest.approx(-0.26095, abs=1e-5)
    np.testing.assert_allclose(dispersion(0.5, np.array([0.0, 2.0])), threshold(0.5) + np.array([0.0, 4.0]))


@pytest.mark.parametrize("alpha", [math.nan, math.inf])
def test_coupling_rejects_non_finite(alpha):
    with pytest.raises(ValueError):
        Coupling(alpha=alpha)
    with pytest.raises(ConfigurationError):
        threshold(alpha)


def test_coupling_is_accepted_everywhere():
    assert threshold(Coupling(alpha=0.0)) == threshold(0.0)


# endregion

# region Bound states


@pytest.mark.parametrize("alpha", [-1.0, 0.0, 1.0])
def test_straight_line_has_no_bound_state(straight_spec, on_grid, alpha):
    curve, disc = on_grid(straight_spec, 10.0, 256)
    assert find_bound_states(curve, alpha, disc, 4.0 * kappa_alpha(alpha)) == []


def test_search_interval_must_lie_above_threshold(straight_spec, on_grid):
    curve, disc = on_grid(straight_spec, 10.0, 256)
    with pytest.raises(ConfigurationError):
        find_bound_states(curve, 0.0, disc, 0.5 * kappa_alpha(0.0))


def test_arc_joint_has_a_bound_state_below_threshold(arc_ground_state):
    curve, disc, states = arc_ground_state
    assert len(states) >= 1

    ground = states[0]
    assert ground.energy < threshold(0.0)
    assert ground.energy == pytest.approx(-(ground.kappa_star**2), rel=1e-15)
    assert ground.residual < 1e-10
    assert ground.branch_index == 0
    assert float(np.sum(disc.weights * ground.phi**2)) == pytest.approx(1.0, rel=1e-12)

    kappa_lo, kappa_hi = ground.bracket
    assert kappa_lo < ground.kappa_star < kappa_hi
    above = top_eigenvalues(assemble_Q(curve, disc.kernel_params(kappa_lo), disc), 1)[0]
    below = top_eigenvalues(assemble_Q(curve, disc.kernel_params(kappa_hi), disc), 1)[0]
    assert above > 0.0 > below


def test_states_are_sorted_by_energy(arc_ground_state):
    _, _, states = arc_ground_state
    energies = [s.energy for s in states]
    assert energies == sorted(energies)


def test_stronger_bend_binds_deeper():
    curve, disc = arc_on_grid(math.pi / 6, 10.0, 512)
    weak = find_bound_states(curve, 0.0, disc, 4.0 * kappa_alpha(0.0))
    curve, disc = arc_on_grid(math.pi / 3, 10.0, 512)
    strong = find_bound_states(curve, 0.0, disc, 4.0 * kappa_alpha(0.0))

    assert weak and strong
    assert strong[0].energy < weak[0].energy < threshold(0.0)


def test_dispersion_rejects_inconsistent_threshold(monkeypatch):
    import leakywire.spectral

    monkeypatch.setattr(leakywire.spectral, "t_symbol", lambda kappa, p: 1.0)
    with pytest.raises(NumericalError):
        dispersion(0.0, 0.0)


# endregion

# region Eigenfunction


def test_eigenfunction_rejects_points_on_the_curve(arc_ground_state):
    curve, _, states = arc_ground_state
    with pytest.raises(SingularityError):
        eigenfunction(curve, states[0], curve.points[100])
    with pytest.raises(SingularityError):
        single_layer(curve, states[0], curve.points[100:101])


def test_eigenfunction_decays_away_from_the_curve(arc_ground_state):
    curve, _, states = arc_ground_state
    apex = curve.points_at(0.0)[0]
    near = eigenfunction(curve, states[0], apex + np.array([0.0, 1.0, 0.0]))
    far = eigenfunction(curve, states[0], apex + np.array([0.0, 3.0, 0.0]))
    assert math.isfinite(near) and math.isfinite(far)
    assert abs(far) < abs(near)


def test_eigenfunction_on_plane(arc_ground_state):
    curve, _, states = arc_ground_state
    points, values = eigenfunction_on_plane(curve, states[0], (0.0, 0.0, 0.0), (3.0, 0.0, 0.0), (0.0, 3.0, 0.0), 11)

    assert points.shape == (121, 3)
    assert values.shape == (121,)
    assert np.isfinite(values).sum() > 100


def test_self_panel_only_corrects_points_near_the_curve(arc_ground_state):
    curve, _, states = arc_ground_state
    close = shifted_curve_point(curve, 0.0, 0.0, 0.5 * curve.spacing)
    far = shifted_curve_point(curve, 0.0, 0.0, 8.0 * curve.spacing)
    points = np.stack([close, far])

    trapezoid = single_layer(curve, states[0], points, near_field="trapezoid")
    corrected = single_layer(curve, states[0], points, near_field="self_panel")
    assert corrected[0] != trapezoid[0]
    assert corrected[1] == trapezoid[1]


def test_single_layer_rejects_unknown_near_field(arc_ground_state):
    curve, _, states = arc_ground_state
    with pytest.raises(ConfigurationError):
        single_layer(curve, states[0], np.array([[0.0, 3.0, 0.0]]), near_field="exact")  # type: ignore[arg-type]


def test_tail_decay_rate(arc_ground_state):
    curve, disc, states = arc_ground_state
    report = tail_decay_rate(curve, states[0], disc)
    assert report.expected_rate == pytest.approx(
        math.sqrt(states[0].kappa_star ** 2 - kappa_alpha(0.0) ** 2), rel=1e-12
    )
    assert report.fitted_rate > 0.0


def test_boundary_condition_rejects_bad_radii(arc_ground_state):
    curve, _, states = arc_ground_state
    with pytest.raises(ConfigurationError):
        verify_boundary_condition(curve, states[0], [0.0], [0.2, 0.3, 0.25, 0.22, 0.21, 0.2, 0.19, 0.18])
    with pytest.raises(ConfigurationError):
        verify_boundary_condition(curve, states[0], [0.0], [0.3, 0.2])
    with pytest.raises(ConfigurationError):
        verify_boundary_condition(curve, states[0], [0.0], np.linspace(0.9, 0.4, 9))
    with pytest.raises(ConfigurationError):
        verify_boundary_condition(curve, states[0], [0.0], correction_order=3)  # type: ignore[arg-type]


def test_default_radii_scale_with_the_grid(arc_ground_state):
    curve, _, _ = arc_ground_state
    radii = default_radii(curve)

    assert radii.shape == (10,)
    assert np.all(np.diff(radii) < 0.0)
    assert radii[-1] == pytest.approx(6.0 * curve.spacing)
    assert radii[0] == pytest.approx(0.9 * curve.tubular_radius.r0)


def test_default_radii_reject_a_coarse_grid():
    curve, _ = arc_on_grid(math.pi / 3, 10.0, 256)
    with pytest.raises(ConfigurationError):
        default_radii(curve)


def test_boundary_condition_with_default_radii(arc_ground_state):
    curve, disc, states = arc_ground_state
    ground = states[0]
    report = verify_boundary_condition(curve, ground, [0.0])

    np.testing.assert_allclose(report.radii, default_radii(curve))
    assert len(report.residuals) == 1
    assert math.isfinite(report.max_residual)
    # The logarithmic coefficient is the charge density over 2 pi
    phi_at_apex = float(ground.phi[np.argmin(np.abs(disc.grid))])
    for xi in report.xi[0]:
        assert xi == pytest.approx(phi_at_apex / (2 * math.pi), rel=5e-2)


@pytest.mark.slow
def test_boundary_residual_shrinks_under_refinement():
    reports = {}
    for num_points in (1024, 2048):
        curve, disc = arc_on_grid(math.pi / 3, 10.0, num_points)
        ground = find_bound_states(curve, 0.0, disc, 4.0 * kappa_alpha(0.0))[0]
        reports[num_points] = verify_boundary_condition(curve, ground, [0.0, 0.5])
    coarse, fine = reports[1024], reports[2048]

    assert fine.radii[-1] == pytest.approx(0.5 * coarse.radii[-1])
    assert fine.max_residual < 1e-2
    assert fine.direction_spread < 1e-2
    for before, after in zip(coarse.residuals, fine.residuals):
        assert after < before


@pytest.mark.slow
def test_refinement_study_meets_the_energy_tolerance():
    spec = CircularArcJointConfig(bend_angle=math.pi / 3, radius=1.0)
    curve = reparametrize_arclength(spec, 40.0 / 1024)
    report = refinement_study(curve, 0.0, 20.0, 1024, 4.0 * kappa_alpha(0.0))

    assert set(report.energies) == {"base", "half_spacing", "double_length"}
    assert all(e is not None and e < threshold(0.0) for e in report.energies.values())
    assert all(change < 1e-4 for change in report.relative_changes.values())
    assert report.passed


@pytest.mark.slow
def test_planar_bump_binds_below_threshold(bump_spec, on_grid):
    curve, disc = on_grid(bump_spec, 20.0, 1024)
    states = find_bound_states(curve, 0.0, disc, 4.0 * kappa_alpha(0.0))

    assert states
    assert states[0].energy < threshold(0.0)
    assert states[0].energy == pytest.approx(-1.2935, abs=5e-4)


# endregion
