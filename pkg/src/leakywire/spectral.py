from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import nshconfig as C
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.spatial.distance import cdist
from scipy.special import k0
from sklearn.linear_model import LinearRegression

from .birman_schwinger import (
    Discretization,
    assemble_Q,
    discretize,
    top_eigenpairs,
    top_eigenvalues,
)
from .errors import (
    ConfigurationError,
    ExtrapolationError,
    NumericalError,
    SingularityError,
)
from .geometry import ArcLengthCurve, shifted_curve_point
from .kernels import PSI1, green_radial, t_symbol

log = logging.getLogger(__name__)


class Coupling(C.Config):
    alpha: float
    """Coupling parameter of the boundary condition ``2 pi alpha Xi = Omega``."""

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ConfigurationError(f"alpha must be finite, got {self.alpha}.")


def _alpha(alpha: float | Coupling) -> float:
    value = alpha.alpha if isinstance(alpha, Coupling) else float(alpha)
    if not math.isfinite(value):
        raise ConfigurationError(f"alpha must be finite, got {value}.")
    return value


def threshold(alpha: float | Coupling) -> float:
    """``xi_alpha = -4 exp(2 (-2 pi alpha + psi(1)))``, the bottom of the essential spectrum."""
    alpha = _alpha(alpha)
    return -4.0 * math.exp(2.0 * (-2.0 * math.pi * alpha + PSI1))


def kappa_alpha(alpha: float | Coupling) -> float:
    """``kappa_alpha = 2 exp(psi(1) - 2 pi alpha) = sqrt(-xi_alpha)``."""
    alpha = _alpha(alpha)
    return 2.0 * math.exp(PSI1 - 2.0 * math.pi * alpha)


def dispersion(alpha: float | Coupling, p: np.ndarray | float) -> np.ndarray | float:
    """Guided-mode band of the straight wire, ``E(p) = xi_alpha + p^2``."""
    alpha = _alpha(alpha)
    consistency = t_symbol(kappa_alpha(alpha), 0.0)
    if abs(consistency - alpha) > 1.0e-12 * max(1.0, abs(alpha)):
        raise NumericalError(
            f"Threshold inconsistency: t(kappa_alpha, 0) = {consistency!r} differs from alpha = {alpha!r}."
        )
    value = threshold(alpha) + np.asarray(p, dtype=np.float64) ** 2
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True, eq=False)
class BoundState:
    kappa_star: float
    energy: float
    """``-kappa_star^2``."""

    phi: np.ndarray
    """Charge density on the grid, ``sum_i w_i phi_i^2 = 1``."""

    branch_index: int
    residual: float
    """``|mu_k(kappa_star) - alpha|``."""

    bracket: tuple[float, float]
    """Interval in ``kappa`` over which ``mu_k - alpha`` changes sign."""

    alpha: float
    grid: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    degenerate: bool = False
    """Another branch crossed ``alpha`` within the root tolerance."""


class _BranchEvaluator:
    """Top eigenvalues of ``Q^kappa``, cached per ``kappa``."""

    def __init__(self, curve: ArcLengthCurve, disc: Discretization, num_branches: int):
        self.curve = curve
        self.disc = disc
        self.num_branches = num_branches
        self._cache: dict[float, np.ndarray] = {}

    def __call__(self, kappa: float) -> np.ndarray:
        if (values := self._cache.get(kappa)) is None:
            Q = assemble_Q(self.curve, self.disc.kernel_params(kappa), self.disc)
            values = top_eigenvalues(Q, self.num_branches)
            self._cache[kappa] = values
        return values


def find_bound_states(
    curve: ArcLengthCurve,
    alpha: float | Coupling,
    disc: Discretization,
    kappa_max: float,
    root_tol: float = 1.0e-10,
    *,
    num_branches: int = 4,
    threshold_margin: float = 1.0e-3,
) -> list[BoundState]:
    """
    Solve ``alpha in spec(Q^kappa)`` for ``kappa`` in ``(kappa_alpha (1 + margin), kappa_max)``.

    Each branch ``mu_k(kappa)`` (the k-th largest eigenvalue) is strictly decreasing; a branch
    with ``mu_k(kappa_lo) > alpha > mu_k(kappa_max)`` is solved with Brent's method.
    Returns an empty list when no branch crosses.
    """
    alpha = _alpha(alpha)
    kappa_lo = kappa_alpha(alpha) * (1.0 + threshold_margin)
    if not kappa_max > kappa_lo:
        raise ConfigurationError(
            f"kappa_max = {kappa_max:.6g} must exceed kappa_alpha (1 + margin) = {kappa_lo:.6g}."
        )
    num_branches = min(num_branches, disc.num_points)

    mu = _BranchEvaluator(curve, disc, num_branches)
    mu_lo, mu_hi = mu(kappa_lo), mu(kappa_max)

    roots: list[tuple[int, float]] = []
    for branch in range(num_branches):
        if not (mu_lo[branch] > alpha > mu_hi[branch]):
            continue
        kappa_star = brentq(
            lambda kappa: float(mu(kappa)[branch]) - alpha,
            kappa_lo,
            kappa_max,
            xtol=root_tol * 1.0e-3,
            maxiter=200,
        )
        roots.append((branch, float(kappa_star)))
        log.info(f"Branch {branch} crosses alpha = {alpha} at kappa = {kappa_star:.12g}.")

    if not roots:
        log.info(f"No eigenvalue branch crosses alpha = {alpha} in [{kappa_lo:.6g}, {kappa_max:.6g}].")
        return []

    degenerate: set[int] = set()
    for a in range(len(roots)):
        for b in range(a + 1, len(roots)):
            if abs(roots[a][1] - roots[b][1]) < root_tol:
                log.warning(
                    f"Degenerate crossing: branches {roots[a][0]} and {roots[b][0]} cross alpha at "
                    f"kappa = {roots[a][1]:.12g} and {roots[b][1]:.12g}."
                )
                degenerate.update((a, b))

    states: list[BoundState] = []
    for k, (branch, kappa_star) in enumerate(roots):
        Q = assemble_Q(curve, disc.kernel_params(kappa_star), disc)
        pair = top_eigenpairs(Q, branch + 1)[branch]
        residual = abs(pair.value - alpha)
        if residual >= root_tol:
            raise NumericalError(
                f"Root on branch {branch} has residual {residual:.3e} above root_tol {root_tol:.3e}."
            )
        states.append(
            BoundState(
                kappa_star=kappa_star,
                energy=-(kappa_star**2),
                phi=pair.vector,
                branch_index=branch,
                residual=residual,
                bracket=(kappa_lo, kappa_max),
                alpha=alpha,
                grid=disc.grid,
                weights=disc.weights,
                degenerate=k in degenerate,
            )
        )

    states.sort(key=lambda state: state.energy)
    return states


# region Eigenfunction


def state_norm(curve: ArcLengthCurve, state: BoundState) -> float:
    """
    ``L^2(R^3)`` norm of the single-layer potential of ``phi``.

    Exact for the discrete sum through the convolution identity
    ``int G(x - a) G(x - b) dx = exp(-kappa |a - b|) / (8 pi kappa)``.
    """
    kappa = state.kappa_star
    density = state.weights * state.phi
    gram = np.exp(-kappa * cdist(curve.points, curve.points)) / (8.0 * np.pi * kappa)
    return float(np.sqrt(density @ gram @ density))


def _self_panel(
    curve: ArcLengthCurve,
    kappa: float,
    x: np.ndarray,
    s_center: float,
    half_width: float,
    *,
    order: int = 16,
) -> float:
    """
    ``int_{|s - s_center| < half_width} G^kappa(x - Gamma(s)) ds`` for a point ``x`` near the panel.

    The ``1/R`` singularity of the tangent-line approximation is integrated analytically; the
    smooth remainder uses Gauss-Legendre on both sides of the projection of ``x``.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    p0 = curve.points_at(s_center)[0]
    t0 = curve.tangents_at(s_center)[0]
    offset = x - p0
    sigma0 = float(offset @ t0)
    rho = float(np.linalg.norm(offset - sigma0 * t0))

    a, b = -half_width, half_width
    singular = (np.arcsinh((b - sigma0) / rho) - np.arcsinh((a - sigma0) / rho)) / (4.0 * np.pi)

    pieces = [(a, b)] if not (a < sigma0 < b) else [(a, sigma0), (sigma0, b)]
    remainder = 0.0
    for lo, hi in pieces:
        sigma = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes
        R = np.linalg.norm(x - curve.points_at(s_center + sigma), axis=-1)
        R0 = np.sqrt(rho * rho + (sigma - sigma0) ** 2)
        integrand = green_radial(kappa, R) - 1.0 / (4.0 * np.pi * R0)
        remainder += 0.5 * (hi - lo) * float(integrand @ weights)
    return float(singular + remainder)


def single_layer(
    curve: ArcLengthCurve,
    state: BoundState,
    x: np.ndarray,
    *,
    near_field: Literal["trapezoid", "self_panel"] = "trapezoid",
    self_panel_range: float = 4.0,
) -> np.ndarray:
    """
    Unnormalized ``f(x) = sum_i w_i G^kappa(x - Gamma(s_i)) phi_i`` at points ``x`` of shape ``(n, 3)``.

    With ``near_field="self_panel"`` the nearest node's term is replaced by the exact panel
    integral for points closer than ``self_panel_range`` grid spacings to the curve. Farther out
    the trapezoid sum is accurate to ``exp(-2 pi r / h)`` and is kept as is.
    """
    kappa = state.kappa_star
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    distance = cdist(x, curve.points)
    if np.any(distance == 0.0):
        raise SingularityError("Single-layer potential evaluated on a grid node of the curve.")

    density = state.weights * state.phi
    values = green_radial(kappa, distance) @ density

    match near_field:
        case "trapezoid":
            pass
        case "self_panel":
            nearest = np.argmin(distance, axis=1)
            near = distance[np.arange(x.shape[0]), nearest] < self_panel_range * curve.spacing
            for k in np.flatnonzero(near):
                i = nearest[k]
                panel = _self_panel(curve, kappa, x[k], float(curve.grid[i]), 0.5 * state.weights[i])
                values[k] += state.phi[i] * panel - density[i] * green_radial(kappa, distance[k, i])
        case _:
            raise ConfigurationError(f"Unknown near-field rule {near_field!r}.")
    return values


def eigenfunction(
    curve: ArcLengthCurve,
    state: BoundState,
    x: np.ndarray,
    *,
    min_distance: float | None = None,
) -> np.ndarray | float:
    """
    The bound state ``f`` at ``x``, normalized to unit ``L^2(R^3)`` norm.

    Points closer to the curve than ``min_distance`` (default: half the grid spacing) are
    rejected; use `verify_boundary_condition` for near-curve behavior.
    """
    scalar = np.ndim(x) == 1
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if min_distance is None:
        min_distance = 0.5 * curve.spacing
    if (closest := float(cdist(x, curve.points).min())) <= min_distance:
        raise SingularityError(
            f"Point at distance {closest:.3e} from the curve is inside the diagonal cutoff {min_distance:.3e}."
        )
    values = single_layer(curve, state, x) / state_norm(curve, state)
    return float(values[0]) if scalar else values


def eigenfunction_on_plane(
    curve: ArcLengthCurve,
    state: BoundState,
    origin: Sequence[float],
    u: Sequence[float],
    v: Sequence[float],
    resolution: int,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Sample ``f`` on ``origin + a u + b v`` for ``a, b`` in ``[-1, 1]`` on a square lattice.

    Returns the points ``(resolution^2, 3)`` and the values; points inside the diagonal cutoff
    are reported as NaN.
    """
    coords = np.linspace(-1.0, 1.0, resolution)
    aa, bb = np.meshgrid(coords, coords, indexing="ij")
    points = (
        np.asarray(origin, dtype=np.float64)
        + aa.ravel()[:, None] * np.asarray(u, dtype=np.float64)
        + bb.ravel()[:, None] * np.asarray(v, dtype=np.float64)
    )
    values = np.full(points.shape[0], np.nan)
    ok = cdist(points, curve.points).min(axis=1) > 0.5 * curve.spacing
    if ok.any():
        values[ok] = single_layer(curve, state, points[ok]) / state_norm(curve, state)
    return points, values


# endregion

# region Boundary condition


@dataclass(frozen=True)
class BoundaryConditionReport:
    s_samples: list[float]
    radii: list[float]
    xi: list[tuple[float, float]]
    """``Xi(s)`` fitted along the binormal and the normal direction."""

    omega: list[tuple[float, float]]
    residuals: list[float]
    max_residual: float
    direction_spread: float
    """Largest relative disagreement of ``Xi`` between the two directions."""


def default_radii(
    curve: ArcLengthCurve,
    diagonal_cutoff: float | None = None,
    *,
    count: int = 10,
    span: float = 3.0,
) -> np.ndarray:
    """
    Decreasing radii for `verify_boundary_condition`, scaled with the grid.

    The smallest radius is 12 diagonal cutoffs (6 grid spacings), where the trapezoid sum of the
    single layer is converged; the largest is ``span`` times that, capped at ``0.9 r0``.
    """
    if diagonal_cutoff is None:
        diagonal_cutoff = 0.5 * curve.spacing
    r_min = 12.0 * diagonal_cutoff
    r_max = min(span * r_min, 0.9 * curve.tubular_radius.r0)
    if r_max < 1.5 * r_min:
        raise ConfigurationError(
            f"Grid spacing {curve.spacing:.4g} is too coarse for the tubular radius "
            f"{curve.tubular_radius.r0:.4g}; refine the grid."
        )
    return np.geomspace(r_max, r_min, count)


def _even_corrections(r: np.ndarray, correction_order: int) -> list[np.ndarray]:
    log_r = np.log(r)
    columns = []
    for k in range(1, correction_order + 1):
        columns += [r ** (2 * k), r ** (2 * k) * log_r]
    return columns


def _fit(columns: list[np.ndarray], values: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    X = np.stack(columns, axis=-1)
    model = LinearRegression().fit(X, values)
    return model.coef_, float(model.intercept_), values - model.predict(X)


def verify_boundary_condition(
    curve: ArcLengthCurve,
    state: BoundState,
    s_samples: Sequence[float],
    r_sequence: Sequence[float] | None = None,
    *,
    near_field: Literal["trapezoid", "self_panel"] = "self_panel",
    correction_order: Literal[1, 2] = 1,
    fit_tolerance: float = 1.0e-4,
    diagonal_cutoff: float | None = None,
) -> BoundaryConditionReport:
    """
    Check ``2 pi alpha Xi(s) = Omega(s)`` from values of ``f`` on shifted curves.

    At each ``s`` the potential is evaluated at ``Gamma(s) +- r b(s)`` and ``Gamma(s) +- r n(s)``.
    Averaging each pair removes the terms odd in the direction (``r ln r``, ``r``, ``r^3``...).
    The single layer ``phi(s) K_0(kappa r) / 2 pi`` of the tangent line is subtracted, which
    leaves a remainder ``D + O(r^2 ln r)``:

    - ``Xi`` is ``phi(s) / 2 pi`` plus the ``-ln r`` coefficient fitted to the remainder;
    - ``Omega`` is ``D - phi(s) (ln(kappa / 2) - psi(1)) / 2 pi``, with ``D`` the intercept of a
      fit of the remainder to the even corrections only.

    The reported residual is ``|2 pi alpha Xi - Omega| / max(|Omega| + |2 pi alpha Xi|, |Xi|)``.
    ``r_sequence`` defaults to `default_radii`.
    """
    if correction_order not in (1, 2):
        raise ConfigurationError(f"correction_order must be 1 or 2, got {correction_order}.")
    if diagonal_cutoff is None:
        diagonal_cutoff = 0.5 * curve.spacing
    r = default_radii(curve, diagonal_cutoff) if r_sequence is None else np.asarray(r_sequence, dtype=np.float64)
    if r.ndim != 1 or r.shape[0] < 3 or np.any(np.diff(r) >= 0.0):
        raise ConfigurationError("r_sequence must contain at least three strictly decreasing radii.")
    n_columns = 1 + 2 * correction_order
    if r.shape[0] <= n_columns + 1:
        raise ConfigurationError(
            f"r_sequence has {r.shape[0]} radii; correction_order {correction_order} needs more than {n_columns + 1}."
        )

    r0 = curve.tubular_radius.r0
    if r[0] >= r0:
        raise ConfigurationError(f"Largest radius {r[0]:.4g} is not below the tubular radius {r0:.4g}.")
    if r[-1] <= 10.0 * diagonal_cutoff:
        raise ConfigurationError(
            f"Smallest radius {r[-1]:.4g} is not above 10 x diagonal cutoff = {10.0 * diagonal_cutoff:.4g}."
        )

    kappa = state.kappa_star
    density_at = CubicSpline(state.grid, state.phi)
    line = k0(kappa * r) / (2.0 * math.pi)
    line_offset = (math.log(0.5 * kappa) - PSI1) / (2.0 * math.pi)
    corrections = _even_corrections(r, correction_order)
    signed = np.concatenate([r, -r])

    two_pi_alpha = 2.0 * math.pi * state.alpha
    xis: list[tuple[float, float]] = []
    omegas: list[tuple[float, float]] = []
    residuals: list[float] = []
    spreads: list[float] = []
    for s in s_samples:
        phi_s = float(density_at(s))
        fits = []
        for xi_dir, eta_dir in ((1.0, 0.0), (0.0, 1.0)):
            points = np.stack(
                [shifted_curve_point(curve, s, xi_dir * rk, eta_dir * rk, r0=r0) for rk in signed]
            )
            values = single_layer(curve, state, points, near_field=near_field)
            averaged = 0.5 * (values[: r.shape[0]] + values[r.shape[0] :])
            remainder = averaged - phi_s * line

            coef, _, misfit = _fit([-np.log(r), *corrections], remainder)
            scale = max(float(np.max(np.abs(averaged))), np.finfo(np.float64).tiny)
            if (relative_misfit := float(np.sqrt(np.mean(misfit**2))) / scale) > fit_tolerance:
                raise ExtrapolationError(
                    f"ln r fit at s = {s:.6g} has relative residual {relative_misfit:.3e} > {fit_tolerance:.1e}.",
                    diagnostics={
                        "s": s,
                        "direction": (xi_dir, eta_dir),
                        "radii": r.tolist(),
                        "values": averaged.tolist(),
                    },
                )
            _, intercept, _ = _fit(corrections, remainder)
            fits.append((phi_s / (2.0 * math.pi) + float(coef[0]), intercept - phi_s * line_offset))

        (xi_b, omega_b), (xi_n, omega_n) = fits
        Xi, Omega = 0.5 * (xi_b + xi_n), 0.5 * (omega_b + omega_n)
        denominator = max(abs(Omega) + abs(two_pi_alpha * Xi), abs(Xi))
        xis.append((xi_b, xi_n))
        omegas.append((omega_b, omega_n))
        residuals.append(abs(two_pi_alpha * Xi - Omega) / denominator)
        spreads.append(abs(xi_b - xi_n) / max(abs(Xi), np.finfo(np.float64).tiny))

    max_residual = max(residuals)
    log.info(f"Boundary condition: max residual {max_residual:.3e}, direction spread {max(spreads):.3e}.")
    return BoundaryConditionReport(
        s_samples=[float(s) for s in s_samples],
        radii=r.tolist(),
        xi=xis,
        omega=omegas,
        residuals=residuals,
        max_residual=max_residual,
        direction_spread=max(spreads),
    )


# endregion

# region Diagnostics


@dataclass(frozen=True)
class TailDecayReport:
    fitted_rate: float
    expected_rate: float
    """``sqrt(kappa_star^2 - kappa_alpha^2)``."""

    relative_error: float


def tail_decay_rate(
    curve: ArcLengthCurve,
    state: BoundState,
    disc: Discretization,
    *,
    tolerance: float = 0.1,
) -> TailDecayReport:
    """Fit the exponential decay of ``phi`` along ``Gamma_+``; a mismatch is logged, not raised."""
    expected = math.sqrt(max(state.kappa_star**2 - kappa_alpha(state.alpha) ** 2, 0.0))
    s_plus = disc.straight_range[1]
    stop = s_plus + 0.6 * (disc.half_length - s_plus)
    amplitude = np.abs(state.phi)
    use = (
        (disc.grid > s_plus + 1.0)
        & (disc.grid < stop)
        & (amplitude > 1.0e-13 * amplitude.max())
    )
    if use.sum() < 3:
        raise ConfigurationError("Too few tail nodes to fit the decay rate; increase L.")

    model = LinearRegression().fit(disc.grid[use][:, None], np.log(amplitude[use]))
    fitted = float(-model.coef_[0])
    relative_error = abs(fitted - expected) / expected if expected > 0.0 else math.inf
    if relative_error > tolerance:
        log.warning(
            f"Tail decay rate {fitted:.5g} differs from sqrt(kappa^2 - kappa_alpha^2) = {expected:.5g} "
            f"by {100 * relative_error:.1f}%."
        )
    return TailDecayReport(fitted_rate=fitted, expected_rate=expected, relative_error=relative_error)


@dataclass(frozen=True)
class RefinementReport:
    energies: dict[str, float | None]
    """Ground-state energy at the base grid, with ``h`` halved and with ``L`` doubled."""

    relative_changes: dict[str, float]
    passed: bool


def refinement_study(
    curve: ArcLengthCurve,
    alpha: float | Coupling,
    half_length: float,
    num_points: int,
    kappa_max: float,
    *,
    tolerance: float = 1.0e-4,
    root_tol: float = 1.0e-10,
) -> RefinementReport:
    """Re-solve the ground state with ``h -> h/2`` and with ``L -> 2L`` at fixed ``h``."""
    settings = {
        "base": (half_length, num_points),
        "half_spacing": (half_length, 2 * num_points),
        "double_length": (2.0 * half_length, 2 * num_points),
    }
    energies: dict[str, float | None] = {}
    for name, (L, N) in settings.items():
        on_grid, disc = discretize(curve, L, N)
        states = find_bound_states(on_grid, alpha, disc, kappa_max, root_tol)
        energies[name] = states[0].energy if states else None
        log.info(f"Refinement {name} (L = {L}, N = {N}): ground-state energy {energies[name]}.")

    base = energies["base"]
    changes: dict[str, float] = {}
    for name in ("half_spacing", "double_length"):
        other = energies[name]
        if base is None or other is None:
            changes[name] = math.inf if (base is None) != (other is None) else 0.0
        else:
            changes[name] = abs(other - base) / abs(base)
    passed = base is not None and all(change < tolerance for change in changes.values())
    return RefinementReport(energies=energies, relative_changes=changes, passed=passed)


# endregion
