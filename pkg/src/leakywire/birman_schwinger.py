from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
from sklearn.linear_model import LinearRegression

from .errors import (
    ConfigurationError,
    EigensolverError,
    NumericalError,
    SingularPencilError,
)
from .geometry import ArcLengthCurve
from .kernels import KernelParams, b_kernel_matrix, t_matrix
from .util import is_power_of_two

log = logging.getLogger(__name__)

Block = Literal["minus", "M", "plus"]
BLOCKS: tuple[Block, ...] = ("minus", "M", "plus")


@dataclass(frozen=True, eq=False)
class Discretization:
    """Uniform periodic grid ``s_i = -L + i h`` on ``[-L, L)`` with its block partition."""

    half_length: float
    num_points: int
    grid: np.ndarray
    spacing: float
    weights: np.ndarray
    """Trapezoid weights; all equal to ``h`` on the periodic grid."""

    blocks: dict[Block, np.ndarray]
    """Index sets of ``Gamma_-``, ``Gamma_M`` and ``Gamma_+``."""

    straight_range: tuple[float, float]

    @classmethod
    def create(
        cls,
        half_length: float,
        num_points: int,
        straight_range: tuple[float, float] | None,
    ):
        if not half_length > 0.0:
            raise ConfigurationError(f"L must be positive, got {half_length}.")
        if not is_power_of_two(num_points):
            raise ConfigurationError(f"N must be a power of two, got {num_points}.")
        if straight_range is None:
            raise ConfigurationError(
                "The curve does not extend along the axis, so it has no straight tails to truncate."
            )

        s_minus, s_plus = straight_range
        if not (-half_length < s_minus <= s_plus < half_length):
            raise ConfigurationError(
                f"The deformation [{s_minus:.6g}, {s_plus:.6g}] must lie inside (-L, L) = "
                f"({-half_length:.6g}, {half_length:.6g})."
            )

        spacing = 2.0 * half_length / num_points
        grid = -half_length + spacing * np.arange(num_points)
        blocks: dict[Block, np.ndarray] = {
            "minus": np.flatnonzero(grid < s_minus),
            "M": np.flatnonzero((grid >= s_minus) & (grid <= s_plus)),
            "plus": np.flatnonzero(grid > s_plus),
        }
        return cls(
            half_length=half_length,
            num_points=num_points,
            grid=grid,
            spacing=spacing,
            weights=np.full(num_points, spacing),
            blocks=blocks,
            straight_range=(s_minus, s_plus),
        )

    def kernel_params(self, kappa: float) -> KernelParams:
        return KernelParams.for_spacing(kappa, self.spacing)

    def block_length(self, block: Block) -> float:
        """Quadrature length of a block, e.g. ``|Gamma_M|``."""
        return float(self.weights[self.blocks[block]].sum())


def discretize(
    curve: ArcLengthCurve,
    half_length: float,
    num_points: int,
) -> tuple[ArcLengthCurve, Discretization]:
    """Build the discretization for ``curve`` and resample the curve on its grid."""
    disc = Discretization.create(half_length, num_points, curve.straight_range)
    return curve.resample(disc.grid), disc


def _check_grid_match(curve: ArcLengthCurve, disc: Discretization):
    if curve.num_points != disc.num_points or not np.array_equal(curve.grid, disc.grid):
        raise ConfigurationError(
            "Curve grid does not match the discretization; resample the curve with discretize()."
        )


@dataclass(frozen=True, eq=False)
class BSMatrix:
    """Nystrom realization of ``Q^kappa = T^kappa + B^kappa`` in the grid basis."""

    kappa: float
    entries: np.ndarray
    t_part: np.ndarray
    b_part: np.ndarray
    weights: np.ndarray
    blocks: dict[Block, np.ndarray]
    half_length: float

    @property
    def num_points(self) -> int:
        return int(self.entries.shape[0])

    def symmetrized(self, matrix: np.ndarray | None = None) -> np.ndarray:
        """``W^(1/2) Q W^(-1/2)``; eigenvalues are unchanged."""
        if matrix is None:
            matrix = self.entries
        root = np.sqrt(self.weights)
        return root[:, None] * matrix / root[None, :]


def assemble_B(curve: ArcLengthCurve, params: KernelParams, disc: Discretization) -> np.ndarray:
    """``B_ij = w_j B^kappa(s_i, s_j)``."""
    _check_grid_match(curve, disc)
    if params.diagonal_cutoff > disc.spacing:
        raise ConfigurationError(
            f"diagonal_cutoff {params.diagonal_cutoff:.4g} exceeds the grid spacing {disc.spacing:.4g}."
        )
    return b_kernel_matrix(curve, params) * disc.weights[None, :]


def assemble_T(params: KernelParams, disc: Discretization) -> np.ndarray:
    return t_matrix(params, disc.num_points, disc.half_length)


def assemble_Q(
    curve: ArcLengthCurve,
    params: KernelParams,
    disc: Discretization,
    *,
    symmetry_tolerance: float = 1.0e-12,
) -> BSMatrix:
    t_part = assemble_T(params, disc)
    b_part = assemble_B(curve, params, disc)
    entries = t_part + b_part

    Q = BSMatrix(
        kappa=params.kappa,
        entries=entries,
        t_part=t_part,
        b_part=b_part,
        weights=disc.weights,
        blocks=disc.blocks,
        half_length=disc.half_length,
    )

    sym = Q.symmetrized()
    asymmetry = float(np.max(np.abs(sym - sym.T)))
    if asymmetry > symmetry_tolerance * max(float(np.max(np.abs(sym))), 1.0):
        raise NumericalError(f"Assembled Q is not symmetric (max asymmetry {asymmetry:.3e}).")
    return Q


@dataclass(frozen=True, eq=False)
class Eigenpair:
    value: float
    vector: np.ndarray
    """Grid function with ``sum_i w_i phi_i^2 = 1``, largest-magnitude entry positive."""


def top_eigenvalues(Q: BSMatrix, k: int) -> np.ndarray:
    """The ``k`` algebraically largest eigenvalues, in descending order."""
    n = Q.num_points
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must lie in [1, {n}], got {k}.")
    values = scipy.linalg.eigh(Q.symmetrized(), eigvals_only=True, subset_by_index=[n - k, n - 1])
    return values[::-1]


def top_eigenpairs(
    Q: BSMatrix,
    k: int,
    *,
    residual_tolerance: float = 1.0e-8,
) -> list[Eigenpair]:
    n = Q.num_points
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must lie in [1, {n}], got {k}.")

    values, vectors = scipy.linalg.eigh(Q.symmetrized(), subset_by_index=[n - k, n - 1])
    values, vectors = values[::-1], vectors[:, ::-1]

    root = np.sqrt(Q.weights)
    phis = vectors / root[:, None]
    norms = np.sqrt(np.sum(Q.weights[:, None] * phis**2, axis=0))
    phis /= norms[None, :]
    signs = np.sign(phis[np.argmax(np.abs(phis), axis=0), np.arange(k)])
    phis *= np.where(signs == 0.0, 1.0, signs)[None, :]

    residuals = np.sqrt(
        np.sum(Q.weights[:, None] * (Q.entries @ phis - phis * values[None, :]) ** 2, axis=0)
    )
    if np.any(residuals > residual_tolerance * np.maximum(np.abs(values), 1.0)):
        raise EigensolverError(
            f"Eigenpair residuals {residuals} exceed tolerance {residual_tolerance}.",
            residuals=residuals,
        )
    return [Eigenpair(value=float(values[m]), vector=phis[:, m]) for m in range(k)]


class Resolvent:
    """
    ``(alpha - Q^kappa)^{-1}`` from one symmetric eigendecomposition.

    Raises `SingularPencilError` when the smallest singular value of ``alpha - Q`` falls
    below ``floor``; this signals a bound state at this ``kappa``.
    """

    def __init__(self, alpha: float, Q: BSMatrix, *, floor: float = 1.0e-10):
        self.alpha = alpha
        self.Q = Q

        values, vectors = scipy.linalg.eigh(alpha * np.eye(Q.num_points) - Q.symmetrized())
        self.smallest_singular_value = float(np.min(np.abs(values)))
        if self.smallest_singular_value < floor:
            raise SingularPencilError(
                f"alpha - Q is singular at kappa = {Q.kappa:.8g} "
                f"(smallest singular value {self.smallest_singular_value:.3e}).",
                kappa=Q.kappa,
                smallest_singular_value=self.smallest_singular_value,
            )

        root = np.sqrt(Q.weights)
        symmetric_inverse = (vectors / values[None, :]) @ vectors.T
        self.matrix = symmetric_inverse / root[:, None] * root[None, :]
        """The inverse in the grid basis."""

    def block(self, i: Block, j: Block) -> np.ndarray:
        blocks = self.Q.blocks
        return self.matrix[np.ix_(blocks[i], blocks[j])]


def resolvent_block(alpha: float, Q: BSMatrix, i: Block, j: Block) -> np.ndarray:
    """``chi_i (alpha - Q)^{-1} chi_j`` as a matrix in the grid basis."""
    return Resolvent(alpha, Q).block(i, j)


def smallest_singular_value(alpha: float, Q: BSMatrix) -> float:
    values = scipy.linalg.eigvalsh(alpha * np.eye(Q.num_points) - Q.symmetrized())
    return float(np.min(np.abs(values)))


@dataclass(frozen=True)
class LowerBoundReport:
    kappas: list[float]
    sigma_min: list[float]
    excluded: list[float]
    """Listed ``kappa`` values where ``alpha - Q`` was singular."""

    fitted_c: float
    relative_residual: float
    passed: bool


def lower_bound_check(
    curve: ArcLengthCurve,
    alpha: float,
    kappa_list: Sequence[float],
    disc: Discretization,
    *,
    floor: float = 1.0e-10,
    residual_tolerance: float = 0.2,
) -> LowerBoundReport:
    """
    Fit ``sigma_min(alpha - Q^kappa) ~ C ln(kappa)`` over the largest half of ``kappa_list``.

    Passes when ``C > 0`` and the relative residual of the fit is below ``residual_tolerance``.
    """
    kappa_list = [float(k) for k in kappa_list]
    if any(b <= a for a, b in zip(kappa_list, kappa_list[1:])):
        raise ConfigurationError("kappa_list must be strictly increasing.")

    kappas: list[float] = []
    sigmas: list[float] = []
    excluded: list[float] = []
    for kappa in kappa_list:
        Q = assemble_Q(curve, disc.kernel_params(kappa), disc)
        sigma = smallest_singular_value(alpha, Q)
        if sigma < floor:
            log.warning(f"alpha - Q is singular at kappa = {kappa:.6g}; excluded from the fit.")
            excluded.append(kappa)
            continue
        kappas.append(kappa)
        sigmas.append(sigma)

    if not kappas:
        raise NumericalError("alpha - Q is singular at every listed kappa.")

    n_fit = math.ceil(len(kappas) / 2)
    x = np.log(np.asarray(kappas[-n_fit:]))[:, None]
    y = np.asarray(sigmas[-n_fit:])
    model = LinearRegression(fit_intercept=False).fit(x, y)
    fitted_c = float(model.coef_[0])
    relative_residual = float(np.linalg.norm(y - model.predict(x)) / np.linalg.norm(y))

    passed = fitted_c > 0.0 and relative_residual < residual_tolerance
    log.info(f"Lower-bound fit: C = {fitted_c:.5g}, relative residual {relative_residual:.3g}.")
    return LowerBoundReport(
        kappas=kappas,
        sigma_min=sigmas,
        excluded=excluded,
        fitted_c=fitted_c,
        relative_residual=relative_residual,
        passed=passed,
    )
