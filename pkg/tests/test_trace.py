from __future__ import annotations

import math

import numpy as np
import pytest

from leakywire.errors import ConfigurationError, ContractViolationError
from leakywire.geometry import CircularArcJointConfig, PlanarBumpConfig
from leakywire.kernels import t_symbol
from leakywire.spectral import kappa_alpha
from leakywire.trace import (
    EXCLUDED_PAIRS,
    X_PAIRS,
    TraceContext,
    block_term,
    cancellation_check,
    cutoff_trace,
    hs_norm_B,
    positivity_scan,
    term_bound,
    term_limit,
    term_norms,
    trace_bound_report,
)


@pytest.fixture
def arc_context(arc_spec, on_grid):
    curve, disc = on_grid(arc_spec, 8.0, 256)
    return TraceContext(curve, 0.0, 2.0, disc)


def test_x_pairs_exclude_same_tail_pairs():
    assert len(X_PAIRS) == 7
    assert not EXCLUDED_PAIRS & set(X_PAIRS)


@pytest.mark.parametrize("pair", sorted(EXCLUDED_PAIRS))
def test_excluded_pairs_are_rejected(arc_spec, on_grid, pair):
    curve, disc = on_grid(arc_spec, 8.0, 256)
    with pytest.raises(ContractViolationError):
        block_term(curve, 0.0, 2.0, disc, *pair, "Q_on_Gamma")


def test_unknown_block_is_rejected(arc_context):
    with pytest.raises(ContractViolationError):
        arc_context.term("M", "left", "T_on_Sigma")  # type: ignore[arg-type]


@pytest.mark.parametrize("pair", X_PAIRS)
def test_term_shapes(arc_context, pair):
    i, j = pair
    blocks = arc_context.disc.blocks
    for source in ("Q_on_Gamma", "T_on_Sigma"):
        term = arc_context.term(i, j, source)
        assert term.middle.shape == (blocks[i].size, blocks[j].size)
        assert term.left_points.shape == (blocks[i].size, 3)


def test_sigma_terms_live_on_the_axis(arc_context):
    term = arc_context.term("minus", "M", "T_on_Sigma")
    np.testing.assert_array_equal(term.left_points[:, 1:], 0.0)
    np.testing.assert_array_equal(term.right_points[:, 1:], 0.0)


@pytest.mark.parametrize("pair", X_PAIRS)
def test_limits_are_within_bounds_and_norms(arc_context, pair):
    term = arc_context.term(*pair, "Q_on_Gamma")
    limit = term_limit(term)
    bound = term_bound(term, arc_context.disc)
    trace_norm, hs_norm = term_norms(term)

    assert bound.kind == ("imbedding" if "M" in pair else "schwarz")
    assert abs(limit) <= bound.value * (1 + 1e-12)
    assert abs(limit) <= trace_norm * (1 + 1e-10)
    assert hs_norm <= trace_norm * (1 + 1e-12)


def test_cutoff_trace_converges_to_the_limit(arc_context):
    term = arc_context.term("minus", "M", "Q_on_Gamma")
    result = cutoff_trace(term, [2.5, 5.0, 10.0, 20.0], max_quadrature_nodes=12)

    assert len(result.values) == 4
    assert result.agreement < 1e-4
    assert abs(result.values[0] - result.limit) > abs(result.values[-1] - result.limit)


def test_cutoff_trace_limit_matches_closed_form_without_thinning(arc_context):
    term = arc_context.term("plus", "minus", "T_on_Sigma")
    nodes = max(term.left_points.shape[0], term.right_points.shape[0])
    result = cutoff_trace(term, [40.0], max_quadrature_nodes=nodes, tau_nodes=8, phi_nodes=8)
    assert result.limit == pytest.approx(term_limit(term), rel=1e-9)


def test_cutoff_trace_rejects_bad_schedule(arc_context):
    term = arc_context.term("M", "M", "Q_on_Gamma")
    with pytest.raises(ConfigurationError):
        cutoff_trace(term, [])
    with pytest.raises(ConfigurationError):
        cutoff_trace(term, [2.0, 1.0])


def test_straight_line_differences_vanish(straight_spec, on_grid):
    curve, disc = on_grid(straight_spec, 8.0, 256)
    report = trace_bound_report(curve, 0.0, 2.0, disc, cutoff_terms=False)

    assert report.verdict
    assert [(e.i, e.j) for e in report.entries] == list(X_PAIRS)
    for entry in report.entries:
        assert entry.cutoff is None
        assert entry.difference_limit == pytest.approx(0.0, abs=1e-12 * max(abs(entry.gamma_limit), 1e-300))
    assert report.cancellation.residuals == {"minus": 0.0, "plus": 0.0}
    assert report.lemma_prefactor == pytest.approx(1.0 / (16 * math.pi))
    assert report.published_prefactor == pytest.approx(math.pi**4 / 4)


def test_arc_joint_report(arc_spec, on_grid):
    curve, disc = on_grid(arc_spec, 8.0, 256)
    report = trace_bound_report(curve, 0.0, 2.0, disc, max_quadrature_nodes=8, workers=2)

    assert report.verdict
    assert report.notes == []
    assert report.gamma_m_length == pytest.approx(disc.block_length("M"))
    assert report.difference_symmetry < 1e-8
    assert any(abs(e.difference_limit) > 0.0 for e in report.entries)
    for entry in report.entries:
        assert entry.cutoff is not None
        assert entry.cutoff.agreement < 1e-3


def test_cancellation_shrinks_away_from_the_deformation(arc_spec, on_grid):
    curve, disc = on_grid(arc_spec, 8.0, 256)
    context = TraceContext(curve, 0.0, 2.0, disc)
    near = cancellation_check(curve, 0.0, 2.0, disc, window=0.1, context=context)
    far = cancellation_check(curve, 0.0, 2.0, disc, window=0.5, context=context)

    for sign in ("minus", "plus"):
        assert 0.0 < far.residuals[sign] <= near.residuals[sign]
        assert math.isfinite(far.relative[sign])


def test_cancellation_rejects_bad_window(arc_spec, on_grid):
    curve, disc = on_grid(arc_spec, 8.0, 256)
    with pytest.raises(ConfigurationError):
        cancellation_check(curve, 0.0, 2.0, disc, window=1.0)


def test_positivity_scan_straight_line(straight_spec, on_grid):
    curve, disc = on_grid(straight_spec, 8.0, 256)
    report = positivity_scan(curve, 0.0, disc, [3.0, 0.5, 2.0])

    assert report.kappas == [0.5, 2.0, 3.0]
    np.testing.assert_allclose(report.min_eigenvalues, [-t_symbol(k, 0.0) for k in report.kappas], atol=1e-12)
    assert report.kappa_check == 2.0
    np.testing.assert_allclose(report.b_min_entries, 0.0, atol=1e-15)
    np.testing.assert_allclose(report.b_min_eigenvalues, 0.0, atol=1e-15)


def test_positivity_scan_arc_joint(arc_spec, on_grid):
    curve, disc = on_grid(arc_spec, 10.0, 256)
    k0 = kappa_alpha(0.0)
    report = positivity_scan(curve, 0.0, disc, [k0, 4.0 * k0])

    assert report.min_eigenvalues[0] < 0.0 < report.min_eigenvalues[1]
    assert report.kappa_check == pytest.approx(4.0 * k0)
    assert min(report.b_min_entries) >= -1e-10
    # The tails carry zero diagonal entries, so the spectrum reaches down to 0 at least
    assert all(value <= 1e-12 for value in report.b_min_eigenvalues)


def test_hs_norm_straight_line_is_zero(straight_spec, on_grid):
    curve, _ = on_grid(straight_spec, 8.0, 256)
    report = hs_norm_B(curve, 1.0, [4.0, 8.0], spacing=0.0625)
    assert report.norms == [0.0, 0.0]


def test_hs_norm_decreases_with_kappa(bump_spec, on_grid):
    curve, _ = on_grid(bump_spec, 8.0, 256)
    low = hs_norm_B(curve, 1.0, [8.0], spacing=0.0625).norms[0]
    high = hs_norm_B(curve, 2.0, [8.0], spacing=0.0625).norms[0]
    assert low > high > 0.0


def test_hs_norm_rejects_unsorted_schedule(bump_spec, on_grid):
    curve, _ = on_grid(bump_spec, 8.0, 256)
    with pytest.raises(ConfigurationError):
        hs_norm_B(curve, 1.0, [8.0, 4.0])


@pytest.mark.slow
@pytest.mark.parametrize(
    "spec",
    [CircularArcJointConfig(bend_angle=math.pi / 3, radius=1.0), PlanarBumpConfig(amplitude=1.0, width=1.0)],
    ids=["arc", "bump"],
)
def test_hs_norm_is_stable_in_the_truncation(spec, on_grid):
    curve, _ = on_grid(spec, 20.0, 1024)
    report = hs_norm_B(curve, 1.0, [20.0, 40.0], spacing=0.0390625)
    assert report.norms[0] > 0.0
    assert report.decrements[0] < 1e-8


@pytest.mark.slow
def test_cancellation_decreases_with_the_truncation(arc_spec, on_grid):
    residuals = []
    for half_length, num_points in ((20.0, 512), (30.0, 1024), (40.0, 1024)):
        curve, disc = on_grid(arc_spec, half_length, num_points)
        residuals.append(cancellation_check(curve, 0.0, 2.0, disc).residuals)

    for sign in ("minus", "plus"):
        values = [r[sign] for r in residuals]
        assert values[0] > values[1] > values[2]
