from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from leakywire.errors import ConfigurationError, SingularityError, WraparoundWarning
from leakywire.geometry import reparametrize_arclength
from leakywire.kernels import (
    PSI1,
    KernelParams,
    apply_t,
    b_kernel,
    b_kernel_matrix,
    ball_convolution,
    discrete_frequencies,
    green3d,
    green_convolution,
    t_matrix,
    t_symbol,
)


def params(kappa: float, cutoff: float = 1.0e-6) -> KernelParams:
    return KernelParams(kappa=kappa, diagonal_cutoff=cutoff)


# region Green function


@pytest.mark.parametrize(
    ("kappa", "x", "expected"),
    [
        (1.0, (1.0, 0.0, 0.0), math.exp(-1.0) / (4 * math.pi)),
        (1.0e-9, (1.0, 0.0, 0.0), 1.0 / (4 * math.pi)),
        (2.0, (0.0, 0.3, 0.4), math.exp(-1.0) / (2 * math.pi)),
    ],
)
def test_green3d_values(kappa, x, expected):
    assert green3d(params(kappa), np.array(x)) == pytest.approx(expected, rel=1e-8)


def test_green3d_is_singular_at_origin():
    with pytest.raises(SingularityError):
        green3d(params(1.0), np.zeros(3))


def test_green_convolution_closed_form():
    y = np.zeros(3)
    assert green_convolution(params(1.0), y, y) == pytest.approx(1.0 / (8 * math.pi), rel=1e-15)
    z = np.array([0.0, 1.0, 0.0])
    assert green_convolution(params(2.0), y, z) == pytest.approx(math.exp(-2.0) / (16 * math.pi), rel=1e-15)


@pytest.mark.parametrize("kappa", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("distance", [0.0, 0.5, 1.0, 3.0])
def test_green_convolution_quadrature_matches_closed_form(kappa, distance):
    y = np.array([0.2, -0.1, 0.4])
    z = y + distance * np.array([0.6, 0.0, 0.8])
    exact = green_convolution(params(kappa), y, z, "closed_form")
    numeric = green_convolution(params(kappa), y, z, "quadrature")
    assert numeric == pytest.approx(exact, rel=1e-6)


def test_green_convolution_rejects_unknown_mode():
    with pytest.raises(ConfigurationError):
        green_convolution(params(1.0), np.zeros(3), np.ones(3), "monte_carlo")  # type: ignore[arg-type]


def test_ball_convolution_coincident_points_is_exact():
    kappa, delta = 1.0, 1.0
    value = ball_convolution(kappa, np.zeros((1, 3)), np.zeros((1, 3)), delta)[0]
    assert value == pytest.approx((1.0 - math.exp(-2 * kappa * delta)) / (8 * math.pi * kappa), rel=1e-12)


def test_ball_convolution_tends_to_full_space_value():
    a = np.array([[0.3, 0.1, 0.0], [0.0, 0.0, 0.0]])
    b = np.array([[1.2, -0.4, 0.5], [0.0, 0.0, 0.0]])
    kappa = 1.0
    value = ball_convolution(kappa, a, b, 40.0)
    d = np.linalg.norm(b - a, axis=-1)
    np.testing.assert_allclose(value, np.exp(-kappa * d) / (8 * math.pi * kappa), rtol=1e-10)


def test_ball_convolution_grows_with_radius():
    a = np.array([[0.3, 0.1, 0.0]])
    b = np.array([[1.2, -0.4, 0.5]])
    values = [ball_convolution(1.0, a, b, delta)[0] for delta in (2.0, 4.0, 8.0, 16.0)]
    assert np.all(np.diff(values) >= 0.0)
    assert values[-1] <= math.exp(-np.linalg.norm(b - a)) / (8 * math.pi) * (1 + 1e-12)


# endregion

# region Geometric kernel


def test_b_kernel_vanishes_for_straight_line(straight_spec):
    curve = reparametrize_arclength(straight_spec, 0.1, margin=5.0)
    s = np.linspace(-4.0, 4.0, 9)
    np.testing.assert_array_equal(b_kernel(curve, params(1.0), s[:, None], s[None, :]), 0.0)
    np.testing.assert_array_equal(b_kernel_matrix(curve, params(1.0, 0.05)), 0.0)


def test_b_kernel_diagonal_and_symmetry(bump_spec):
    curve = reparametrize_arclength(bump_spec, 0.05)
    p = params(1.0, 0.025)
    s = np.array([-2.0, -0.3, 0.0, 0.7, 3.1])
    assert np.all(b_kernel(curve, p, s, s) == 0.0)

    forward = b_kernel(curve, p, s[:, None], s[None, :])
    np.testing.assert_allclose(forward, forward.T, rtol=1e-13, atol=0.0)


def test_b_kernel_rejects_arc_lengths_outside_grid(bump_spec):
    curve = reparametrize_arclength(bump_spec, 0.05)
    with pytest.raises(ConfigurationError):
        b_kernel(curve, params(1.0), curve.grid[-1] + 1.0, 0.0)


@pytest.mark.parametrize("u", [1.0e-3, 1.0e-2])
def test_b_kernel_small_separation_slope(arc_spec, u):
    curve = reparametrize_arclength(arc_spec, 0.01)
    s = 0.2
    value = b_kernel(curve, params(1.0), s - u / 2, s + u / 2)
    assert value / u == pytest.approx(1.0 / (96 * math.pi), rel=1e-3)


def test_b_kernel_expansion_matches_direct_formula_at_seam(arc_spec):
    curve = reparametrize_arclength(arc_spec, 0.01)
    u, s = 0.01, 0.3
    direct = b_kernel(curve, params(1.5, 1.0e-6), s - u / 2, s + u / 2)
    expansion = b_kernel(curve, params(1.5, 0.02), s - u / 2, s + u / 2)
    assert expansion == pytest.approx(direct, rel=1e-7)


def test_b_kernel_matrix_is_pointwise_nonnegative(bump_spec, on_grid):
    curve, disc = on_grid(bump_spec, 10.0, 256)
    matrix = b_kernel_matrix(curve, disc.kernel_params(1.0))
    assert matrix.min() >= -1e-12
    assert matrix.max() > 0.0

    plus = disc.blocks["plus"]
    np.testing.assert_array_equal(matrix[np.ix_(plus, plus)], 0.0)


def test_b_kernel_decreases_with_kappa(bump_spec, on_grid):
    curve, disc = on_grid(bump_spec, 10.0, 256)
    low = b_kernel_matrix(curve, disc.kernel_params(0.5))
    high = b_kernel_matrix(curve, disc.kernel_params(2.0))
    assert np.all(high <= low + 1e-15)


# endregion

# region Fourier symbol


def test_t_symbol_zero_at_special_kappa():
    assert t_symbol(2.0 * math.exp(PSI1), 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("alpha", [-1.0, -0.2, 0.0, 0.3, 1.0])
def test_t_symbol_at_threshold_equals_alpha(alpha):
    kappa = 2.0 * math.exp(PSI1 - 2 * math.pi * alpha)
    assert t_symbol(kappa, 0.0) == pytest.approx(alpha, abs=1e-13)


def test_t_symbol_is_decreasing():
    p = np.linspace(0.0, 10.0, 101)
    assert np.all(np.diff(t_symbol(1.0, p)) < 0.0)
    by_kappa = [t_symbol(kappa, 0.3) for kappa in np.linspace(0.1, 5.0, 50)]
    assert np.all(np.diff(by_kappa) < 0.0)


def test_discrete_frequencies():
    p = discrete_frequencies(8, 2.0)
    np.testing.assert_allclose(p[:4], np.pi * np.arange(4) / 2.0, rtol=1e-15)
    assert p[4] < 0.0


def test_apply_t_plane_wave():
    L, N = 5.0, 64
    grid = -L + 2 * L / N * np.arange(N)
    p0 = 3 * math.pi / L
    f = np.exp(1j * p0 * grid)
    out = apply_t(1.0, f, L, check_decay=False)
    np.testing.assert_allclose(out, t_symbol(1.0, p0) * f, rtol=1e-12, atol=1e-14)

    with pytest.warns(WraparoundWarning):
        apply_t(1.0, f, L)


def test_apply_t_real_and_self_adjoint():
    L, N = 20.0, 512
    grid = -L + 2 * L / N * np.arange(N)
    f = np.exp(-(grid**2))
    g = np.exp(-((grid - 1.5) ** 2) / 2.0)

    tf, tg = apply_t(1.0, f, L), apply_t(1.0, g, L)
    assert tf.dtype == np.float64
    scale = np.linalg.norm(tf) * np.linalg.norm(g) + np.linalg.norm(f) * np.linalg.norm(tg)
    assert abs(float(tf @ g) - float(f @ tg)) <= 1e-12 * scale


def test_apply_t_rejects_non_power_of_two():
    with pytest.raises(ConfigurationError):
        apply_t(1.0, np.zeros(100), 5.0)


def test_apply_t_matches_continuous_multiplier_on_gaussian():
    kappa, L, N = 1.0, 40.0, 2048
    grid = -L + 2 * L / N * np.arange(N)
    out = apply_t(kappa, np.exp(-(grid**2)), L)

    def continuous(s: float) -> float:
        value, _ = quad(
            lambda p: t_symbol(kappa, p) * math.sqrt(math.pi) * math.exp(-p * p / 4) * math.cos(p * s),
            0.0,
            40.0,
            epsabs=1e-14,
            limit=400,
        )
        return value / math.pi

    for index in (N // 2, N // 2 + 13, N // 2 + 26, N // 2 + 51):
        assert out[index] == pytest.approx(continuous(grid[index]), abs=1e-9)


def test_t_matrix_trace_and_spectrum():
    kappa, L, N = 1.3, 6.0, 64
    matrix = t_matrix(kappa, N, L)
    symbol = t_symbol(kappa, discrete_frequencies(N, L))

    np.testing.assert_array_equal(matrix, matrix.T)
    assert np.trace(matrix) == pytest.approx(symbol.sum(), rel=1e-12)
    np.testing.assert_allclose(np.linalg.eigvalsh(matrix), np.sort(symbol), atol=1e-12)


# endregion
