from __future__ import annotations

import logging
import math
import warnings
from typing import Literal

import nshconfig as C
import numpy as np
import scipy.fft
import scipy.linalg
from scipy.integrate import IntegrationWarning, quad
from scipy.spatial.distance import cdist

from .errors import (
    ConfigurationError,
    QuadratureAccuracyError,
    SingularityError,
    WraparoundWarning,
)
from .geometry import ArcLengthCurve
from .util import is_power_of_two

log = logging.getLogger(__name__)

PSI1: float = -float(np.euler_gamma)
"""``psi(1)``, the digamma function at 1 (minus the Euler-Mascheroni constant)."""

LN2: float = math.log(2.0)


class KernelParams(C.Config):
    kappa: C.PositiveFloat
    """Spectral parameter ``kappa``, with ``z = -kappa^2``."""

    diagonal_cutoff: C.PositiveFloat
    """Below this arc-length separation the geometric kernel uses its curvature expansion."""

    @classmethod
    def for_spacing(cls, kappa: float, spacing: float):
        """The default cutoff is half the grid spacing."""
        return cls(kappa=kappa, diagonal_cutoff=0.5 * spacing)


# region Free Green function


def green_radial(kappa: float, r: np.ndarray | float) -> np.ndarray:
    """``exp(-kappa r) / (4 pi r)`` for ``r > 0``."""
    r = np.asarray(r, dtype=np.float64)
    return np.exp(-kappa * r) / (4.0 * np.pi * r)


def green3d(params: KernelParams, x: np.ndarray) -> np.ndarray | float:
    """``G^kappa(x) = exp(-kappa |x|) / (4 pi |x|)``, for a point ``(3,)`` or points ``(..., 3)``."""
    x = np.asarray(x, dtype=np.float64)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0.0):
        raise SingularityError("G^kappa is singular at x = 0.")
    value = green_radial(params.kappa, r)
    return float(value) if value.ndim == 0 else value


def green_convolution(
    params: KernelParams,
    y: np.ndarray,
    z: np.ndarray,
    mode: Literal["closed_form", "quadrature"] = "closed_form",
    *,
    epsrel: float = 1.0e-9,
    limit: int = 200,
    tail_bound: float = 1.0e-12,
) -> float:
    """
    ``int G^kappa(y - x) G^kappa(x - z) dx`` over ``R^3``.

    ``closed_form`` returns ``exp(-kappa |y - z|) / (8 pi kappa)``. ``quadrature`` integrates
    the product in spherical coordinates about the midpoint of ``[y, z]`` with the polar axis
    along ``z - y``; the azimuth is done analytically and the polar angle is traded for the
    distance to the nearer endpoint, which removes the integrable singularity.
    """
    kappa = params.kappa
    d = float(np.linalg.norm(np.asarray(z, dtype=np.float64) - np.asarray(y, dtype=np.float64)))

    match mode:
        case "closed_form":
            return math.exp(-kappa * d) / (8.0 * math.pi * kappa)
        case "quadrature":
            pass
        case _:
            raise ConfigurationError(f"Unknown convolution mode {mode!r}.")

    a = 0.5 * d
    radius = a + math.log(1.0 / tail_bound) / kappa

    def inner(rho: float) -> float:
        if rho == 0.0:
            return 0.0
        if a == 0.0:
            return 4.0 * math.pi * rho * rho * float(green_radial(kappa, rho)) ** 2

        def integrand(r1: float) -> float:
            r2 = math.sqrt(max(2.0 * rho * rho + 2.0 * a * a - r1 * r1, 0.0))
            return math.exp(-kappa * r1) * math.exp(-kappa * r2) / (4.0 * math.pi * r2)

        value, _ = quad(
            integrand,
            abs(rho - a),
            math.sqrt(rho * rho + a * a),
            epsabs=0.0,
            epsrel=1.0e-3 * epsrel,
            limit=limit,
        )
        return rho / a * value

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        value, error = quad(
            inner,
            0.0,
            radius,
            points=[a] if a > 0.0 else None,
            epsabs=0.0,
            epsrel=epsrel,
            limit=limit,
        )

    if any(issubclass(w.category, IntegrationWarning) for w in caught):
        raise QuadratureAccuracyError(
            f"Convolution quadrature did not converge for |y - z| = {d:.6g}, kappa = {kappa:.6g}.",
            estimate=value,
            error=error,
        )
    return value


def _orthonormal_complement(e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.where(
        (np.abs(e[:, 0]) < 0.9)[:, None],
        np.array([1.0, 0.0, 0.0]),
        np.array([0.0, 1.0, 0.0]),
    )
    e1 = helper - np.sum(helper * e, axis=-1, keepdims=True) * e
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    return e1, np.cross(e, e1)


def ball_convolution(
    kappa: float,
    a: np.ndarray,
    b: np.ndarray,
    delta: float,
    *,
    tau_nodes: int = 24,
    phi_nodes: int = 24,
    chunk_size: int = 128,
) -> np.ndarray:
    """
    ``int_{|x| < delta} G^kappa(a - x) G^kappa(x - b) dx`` for pairs of points ``a[k], b[k]``.

    The integral is taken in prolate spheroidal coordinates with foci ``a`` and ``b``, where
    the product of Green functions becomes ``d exp(-kappa d sigma) / (32 pi^2)``. For each
    direction ``(tau, phi)`` the crossings of the ball boundary are the real roots of a quartic
    in ``exp(u)``, ``sigma = cosh(u)``, so the ``sigma`` integral is exact. Coincident pairs
    use spherical coordinates about the common point. As ``delta -> infinity`` the result
    tends to ``exp(-kappa d) / (8 pi kappa)``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    n_pairs = a.shape[0]
    out = np.empty(n_pairs)

    tau, w_tau = np.polynomial.legendre.leggauss(tau_nodes)
    phi = 2.0 * np.pi * (np.arange(phi_nodes) + 0.5) / phi_nodes
    w_phi = 2.0 * np.pi / phi_nodes
    weights = w_tau[:, None] * w_phi * np.ones(phi_nodes)[None, :]
    cos_phi, sin_phi = np.cos(phi), np.sin(phi)
    sin_tau = np.sqrt(1.0 - tau * tau)

    d = np.linalg.norm(b - a, axis=-1)
    coincident = d <= 1.0e-9 * np.maximum(1.0, np.linalg.norm(a, axis=-1))

    # Coincident pairs: rays a + r omega leave the ball at the roots of a quadratic
    if coincident.any():
        p = a[coincident]
        omega = np.stack(
            [
                tau[:, None] * np.ones(phi_nodes)[None, :],
                sin_tau[:, None] * cos_phi[None, :],
                sin_tau[:, None] * sin_phi[None, :],
            ],
            axis=-1,
        )
        pw = np.einsum("mk,tpk->mtp", p, omega)
        disc = pw * pw - np.sum(p * p, axis=-1)[:, None, None] + delta * delta
        root = np.sqrt(np.maximum(disc, 0.0))
        r_hi = np.where(disc > 0.0, np.maximum(-pw + root, 0.0), 0.0)
        r_lo = np.where(disc > 0.0, np.clip(-pw - root, 0.0, None), 0.0)
        r_lo = np.minimum(r_lo, r_hi)
        contribution = np.exp(-2.0 * kappa * r_lo) - np.exp(-2.0 * kappa * r_hi)
        out[coincident] = np.einsum("mtp,tp->m", contribution, weights) / (32.0 * np.pi**2 * kappa)

    indices = np.flatnonzero(~coincident)
    for start in range(0, indices.shape[0], chunk_size):
        idx = indices[start : start + chunk_size]
        dk = d[idx]
        c = 0.5 * (a[idx] + b[idx])
        e = (b[idx] - a[idx]) / dk[:, None]
        e1, e2 = _orthonormal_complement(e)

        ce = np.sum(c * e, axis=-1)
        c_phi = (
            np.sum(c * e1, axis=-1)[:, None] * cos_phi[None, :]
            + np.sum(c * e2, axis=-1)[:, None] * sin_phi[None, :]
        )
        # Quartic coefficients, divided by the leading coefficient d^2 / 4
        A = (dk * ce)[:, None, None] * tau[None, :, None]
        Bc = dk[:, None, None] * sin_tau[None, :, None] * c_phi[:, None, :]
        lead = 0.25 * dk * dk
        C1 = lead[:, None] * tau[None, :] ** 2
        C2 = lead[:, None] * (1.0 - tau[None, :] ** 2)
        c2 = np.sum(c * c, axis=-1) - delta * delta

        shape = (idx.shape[0], tau_nodes, phi_nodes)
        p3 = 2.0 * (A + Bc) / lead[:, None, None]
        p2 = np.broadcast_to(
            ((4.0 * c2[:, None] + 2.0 * C1 - 2.0 * C2) / lead[:, None])[:, :, None], shape
        )
        p1 = 2.0 * (A - Bc) / lead[:, None, None]

        companion = np.zeros(shape + (4, 4))
        companion[..., 0, 0] = -p3
        companion[..., 0, 1] = -p2
        companion[..., 0, 2] = -p1
        companion[..., 0, 3] = -1.0
        companion[..., 1, 0] = 1.0
        companion[..., 2, 1] = 1.0
        companion[..., 3, 2] = 1.0
        roots = np.linalg.eigvals(companion)

        real = roots.real
        valid = (np.abs(roots.imag) <= 1.0e-7 * np.abs(roots)) & (real >= 1.0)
        sigma = np.where(valid, 0.5 * (real + 1.0 / np.where(valid, real, 1.0)), np.inf)
        sigma = np.sort(sigma, axis=-1)

        # Whether sigma = 1 (the segment between the foci) starts inside the ball
        on_segment = c[:, None, :] + 0.5 * dk[:, None, None] * tau[None, :, None] * e[:, None, :]
        inside0 = np.sum(on_segment * on_segment, axis=-1) < delta * delta
        inside0 = np.broadcast_to(inside0[:, :, None], shape)

        bounds = np.concatenate([np.ones(shape + (1,)), sigma, np.full(shape + (1,), np.inf)], axis=-1)
        with np.errstate(invalid="ignore"):
            E = np.exp(-kappa * dk[:, None, None, None] * (bounds - 1.0))
        E = np.nan_to_num(E, nan=0.0)
        parity = np.arange(5) % 2 == 1
        inside = inside0[..., None] ^ parity
        contribution = np.sum(np.where(inside, E[..., :-1] - E[..., 1:], 0.0), axis=-1)

        out[idx] = (
            np.exp(-kappa * dk)
            * np.einsum("mtp,tp->m", contribution, weights)
            / (32.0 * np.pi**2 * kappa)
        )

    return out


# endregion

# region Geometric kernel


def _regularized_difference(
    kappa: float,
    u: np.ndarray,
    delta_u: np.ndarray,
) -> np.ndarray:
    """``G(u - delta_u) - G(u)`` written without cancellation."""
    d = u - delta_u
    return np.exp(-kappa * u) * (u * np.expm1(kappa * delta_u) + delta_u) / (4.0 * np.pi * d * u)


def b_kernel_taylor(
    kappa: float,
    u: np.ndarray,
    gamma: np.ndarray,
    gamma1: np.ndarray,
    gamma2: np.ndarray,
) -> np.ndarray:
    """
    The geometric kernel for small separations ``u`` from the chord expansion

        d^2 = u^2 (1 - gamma^2 u^2 / 12 + c4 u^4),

    with curvature data taken at the midpoint. Torsion does not enter to this order.
    """
    u = np.abs(np.asarray(u, dtype=np.float64))
    c4 = ((2.0 / 45.0) * gamma**4 - gamma1**2 / 45.0 - gamma * gamma2 / 15.0) / 16.0
    eps = gamma**2 * u**2 / 12.0 - c4 * u**4
    delta_u = u * eps / (1.0 + np.sqrt(1.0 - eps))
    with np.errstate(invalid="ignore", divide="ignore"):
        value = _regularized_difference(kappa, u, delta_u)
    return np.where(u == 0.0, 0.0, value)


def b_kernel(
    curve: ArcLengthCurve,
    params: KernelParams,
    s: np.ndarray | float,
    sp: np.ndarray | float,
) -> np.ndarray | float:
    """``B^kappa(s, s') = G^kappa(Gamma(s) - Gamma(s')) - G^kappa(s - s')``."""
    scalar = np.ndim(s) == 0 and np.ndim(sp) == 0
    s, sp = np.broadcast_arrays(np.asarray(s, dtype=np.float64), np.asarray(sp, dtype=np.float64))
    shape = s.shape
    s, sp = s.ravel(), sp.ravel()

    lo, hi = curve.grid[0], curve.grid[-1]
    if np.any((s < lo) | (s > hi) | (sp < lo) | (sp > hi)):
        raise ConfigurationError(f"Arc lengths must lie in the grid range [{lo:.6g}, {hi:.6g}].")

    out = np.zeros(s.shape[0])
    if curve.is_straight:
        return 0.0 if scalar else out.reshape(shape)

    kappa = params.kappa
    u = np.abs(s - sp)
    near = (u <= params.diagonal_cutoff) & (u > 0.0)
    far = u > params.diagonal_cutoff

    if far.any():
        d = np.linalg.norm(curve.points_at(s[far]) - curve.points_at(sp[far]), axis=-1)
        out[far] = _regularized_difference(kappa, u[far], u[far] - d)
    if near.any():
        mid = 0.5 * (s[near] + sp[near])
        gamma, gamma1, gamma2 = curve.curvature_derivatives_at(mid)
        out[near] = b_kernel_taylor(kappa, u[near], gamma, gamma1, gamma2)

    out = _zero_same_tail(out, s, sp, curve.straight_range)
    return float(out[0]) if scalar else out.reshape(shape)


def _zero_same_tail(
    values: np.ndarray,
    s: np.ndarray,
    sp: np.ndarray,
    straight_range: tuple[float, float] | None,
) -> np.ndarray:
    if straight_range is None:
        return values
    s_minus, s_plus = straight_range
    same = ((s < s_minus) & (sp < s_minus)) | ((s > s_plus) & (sp > s_plus))
    return np.where(same, 0.0, values)


def b_kernel_matrix(
    curve: ArcLengthCurve,
    params: KernelParams,
    *,
    row_chunk: int = 512,
) -> np.ndarray:
    """
    ``B^kappa(s_i, s_j)`` on all pairs of grid nodes of ``curve`` (no quadrature weights).

    Pairs on the same straight half-line are exact zeros and the whole matrix vanishes for
    the straight line.
    """
    n = curve.num_points
    out = np.zeros((n, n))
    if curve.is_straight:
        return out

    kappa, cutoff = params.kappa, params.diagonal_cutoff
    s = curve.grid
    for start in range(0, n, row_chunk):
        rows = slice(start, min(start + row_chunk, n))
        u = np.abs(s[rows, None] - s[None, :])
        d = cdist(curve.points[rows], curve.points)
        block = np.zeros_like(u)

        far = u > cutoff
        block[far] = _regularized_difference(kappa, u[far], u[far] - d[far])

        near = (u <= cutoff) & (u > 0.0)
        if near.any():
            ii, jj = np.nonzero(near)
            mid = 0.5 * (s[rows][ii] + s[jj])
            gamma, gamma1, gamma2 = curve.curvature_derivatives_at(mid)
            block[ii, jj] = b_kernel_taylor(kappa, u[ii, jj], gamma, gamma1, gamma2)

        out[rows] = _zero_same_tail(block, s[rows, None], s[None, :], curve.straight_range)

    # Exact symmetry
    return 0.5 * (out + out.T)


# endregion

# region Fourier symbol


def t_symbol(params: KernelParams | float, p: np.ndarray | float) -> np.ndarray | float:
    """``t_kappa(p) = (1/2pi) (-ln sqrt(p^2 + kappa^2) + ln 2 + psi(1))``."""
    kappa = params.kappa if isinstance(params, KernelParams) else float(params)
    value = (-np.log(np.hypot(p, kappa)) + LN2 + PSI1) / (2.0 * np.pi)
    return float(value) if np.ndim(value) == 0 else value


def discrete_frequencies(num_points: int, half_length: float) -> np.ndarray:
    """``p_k = pi k / L`` in FFT order."""
    return 2.0 * np.pi * scipy.fft.fftfreq(num_points, d=2.0 * half_length / num_points)


def _check_grid(num_points: int):
    if not is_power_of_two(num_points):
        raise ConfigurationError(f"The number of grid points must be a power of two, got {num_points}.")


def apply_t(
    params: KernelParams | float,
    f: np.ndarray,
    half_length: float,
    *,
    decay_tolerance: float = 1.0e-10,
    check_decay: bool = True,
) -> np.ndarray:
    """
    Periodic spectral realization of ``T^kappa`` on the uniform grid over ``[-L, L)``.

    A plane wave at a grid frequency ``p_0`` is mapped to ``t_kappa(p_0)`` times itself.
    Real input gives real output.
    """
    f = np.asarray(f)
    num_points = f.shape[0]
    _check_grid(num_points)

    if check_decay:
        scale = float(np.max(np.abs(f), initial=0.0))
        boundary = float(max(abs(f[0]), abs(f[-1])))
        if scale > 0.0 and boundary > decay_tolerance * scale:
            warnings.warn(
                f"Operand does not decay at the interval ends (relative boundary magnitude "
                f"{boundary / scale:.3e}); the periodic realization wraps around.",
                WraparoundWarning,
                stacklevel=2,
            )

    symbol = t_symbol(params, discrete_frequencies(num_points, half_length))
    if np.iscomplexobj(f):
        return scipy.fft.ifft(symbol * scipy.fft.fft(f))

    rfreq = 2.0 * np.pi * scipy.fft.rfftfreq(num_points, d=2.0 * half_length / num_points)
    return scipy.fft.irfft(t_symbol(params, rfreq) * scipy.fft.rfft(f), n=num_points)


def t_matrix(params: KernelParams | float, num_points: int, half_length: float) -> np.ndarray:
    """The circulant matrix of ``apply_t`` (exactly symmetric)."""
    _check_grid(num_points)
    symbol = t_symbol(params, discrete_frequencies(num_points, half_length))
    column = scipy.fft.ifft(symbol).real
    matrix = scipy.linalg.circulant(column)
    return 0.5 * (matrix + matrix.T)


# endregion
