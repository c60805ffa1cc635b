from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .birman_schwinger import (
    BLOCKS,
    Block,
    BSMatrix,
    Discretization,
    Resolvent,
    assemble_B,
    assemble_Q,
    assemble_T,
    top_eigenvalues,
)
from .errors import ConfigurationError, ContractViolationError
from .geometry import ArcLengthCurve
from .kernels import KernelParams, ball_convolution, green_radial

log = logging.getLogger(__name__)

Source = Literal["Q_on_Gamma", "T_on_Sigma"]

EXCLUDED_PAIRS: frozenset[tuple[Block, Block]] = frozenset({("plus", "plus"), ("minus", "minus")})
X_PAIRS: tuple[tuple[Block, Block], ...] = tuple(
    (i, j) for i in BLOCKS for j in BLOCKS if (i, j) not in EXCLUDED_PAIRS
)
"""The block pairs that survive the cancellation, in report order."""


def _check_pair(i: Block, j: Block):
    if i not in BLOCKS or j not in BLOCKS:
        raise ContractViolationError(f"Unknown block pair ({i!r}, {j!r}).")
    if (i, j) in EXCLUDED_PAIRS:
        raise ContractViolationError(
            f"Block pair ({i}, {j}) cancels against the straight wire and has no term."
        )


class TraceContext:
    """Everything shared by the block terms at one ``(alpha, kappa)``: both resolvents and both point sets."""

    def __init__(
        self,
        curve: ArcLengthCurve,
        alpha: float,
        kappa: float,
        disc: Discretization,
    ):
        self.curve = curve
        self.alpha = alpha
        self.kappa = kappa
        self.disc = disc

        params = disc.kernel_params(kappa)
        self.Q = assemble_Q(curve, params, disc)
        self.T = _t_only(params, disc)
        self.resolvent_Q = Resolvent(alpha, self.Q)
        self.resolvent_T = Resolvent(alpha, self.T)

        self.axis_points = np.zeros((disc.num_points, 3))
        self.axis_points[:, 0] = disc.grid

    def resolvent(self, source: Source) -> Resolvent:
        return self.resolvent_Q if source == "Q_on_Gamma" else self.resolvent_T

    def points(self, source: Source) -> np.ndarray:
        return self.curve.points if source == "Q_on_Gamma" else self.axis_points

    def term(self, i: Block, j: Block, source: Source) -> TermFactorization:
        _check_pair(i, j)
        blocks = self.disc.blocks
        points = self.points(source)
        return TermFactorization(
            i=i,
            j=j,
            source=source,
            kappa=self.kappa,
            left_points=points[blocks[i]],
            left_weights=self.disc.weights[blocks[i]],
            middle=self.resolvent(source).block(i, j),
            right_points=points[blocks[j]],
            right_weights=self.disc.weights[blocks[j]],
        )


def _t_only(params: KernelParams, disc: Discretization) -> BSMatrix:
    t_part = assemble_T(params, disc)
    return BSMatrix(
        kappa=params.kappa,
        entries=t_part,
        t_part=t_part,
        b_part=np.zeros_like(t_part),
        weights=disc.weights,
        blocks=disc.blocks,
        half_length=disc.half_length,
    )


@dataclass(frozen=True, eq=False)
class TermFactorization:
    """
    One term ``R_{Gamma_i} (alpha - Q)^{-1}_{ij} R_{Gamma_j}`` (or its straight-wire counterpart)
    with kernel ``sum_ab w_a G(x - P_a) K_ab G(P_b - y)``.
    """

    i: Block
    j: Block
    source: Source
    kappa: float
    left_points: np.ndarray
    left_weights: np.ndarray
    middle: np.ndarray
    """``K``: the ``(i, j)`` block of the inverse in the grid basis."""

    right_points: np.ndarray
    right_weights: np.ndarray = field(repr=False)

    def exponential_gram(self) -> np.ndarray:
        """``exp(-kappa |P_a - P_b|)`` between left and right points."""
        return np.exp(-self.kappa * cdist(self.left_points, self.right_points))


def block_term(
    curve: ArcLengthCurve,
    alpha: float,
    kappa: float,
    disc: Discretization,
    i: Block,
    j: Block,
    source: Source,
) -> TermFactorization:
    _check_pair(i, j)
    return TraceContext(curve, alpha, kappa, disc).term(i, j, source)


def term_limit(term: TermFactorization) -> float:
    """The ``delta -> infinity`` limit of the cut-off trace, in closed form."""
    total = np.sum(term.left_weights[:, None] * term.middle * term.exponential_gram())
    return float(total / (8.0 * np.pi * term.kappa))


@dataclass(frozen=True)
class CutoffTraceResult:
    deltas: list[float]
    values: list[float]
    limit: float
    """Closed-form limit on the same (strided) node set."""

    agreement: float
    """Relative difference between the value at the largest ``delta`` and ``limit``."""

    monotone: bool


def _strided(num: int, max_nodes: int) -> tuple[np.ndarray, int]:
    stride = max(1, math.ceil(num / max_nodes))
    return np.arange(0, num, stride), stride


def cutoff_trace(
    term: TermFactorization,
    delta_schedule: Sequence[float],
    *,
    max_quadrature_nodes: int = 48,
    tau_nodes: int = 24,
    phi_nodes: int = 24,
) -> CutoffTraceResult:
    """
    ``int_{|x| < delta} S(x, x) dx = sum_ab w_a K_ab int_{|x| < delta} G(P_a - x) G(x - P_b) dx``.

    Nodes are thinned to at most ``max_quadrature_nodes`` per side, with the quadrature
    weights scaled accordingly; the closed-form limit is computed on the same nodes.
    """
    deltas = [float(d) for d in delta_schedule]
    if not deltas or any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ConfigurationError("delta_schedule must be non-empty and strictly increasing.")

    left, left_stride = _strided(term.left_points.shape[0], max_quadrature_nodes)
    right, right_stride = _strided(term.right_points.shape[0], max_quadrature_nodes)
    weights = (term.left_weights[left] * left_stride)[:, None] * (
        term.middle[np.ix_(left, right)] * right_stride
    )

    a_index, b_index = np.meshgrid(left, right, indexing="ij")
    a = term.left_points[a_index.ravel()]
    b = term.right_points[b_index.ravel()]

    values = []
    for delta in deltas:
        convolution = ball_convolution(
            term.kappa, a, b, delta, tau_nodes=tau_nodes, phi_nodes=phi_nodes
        ).reshape(weights.shape)
        values.append(float(np.sum(weights * convolution)))
        log.debug(f"Cut-off trace ({term.i}, {term.j}) at delta = {delta:.4g}: {values[-1]:.10g}")

    gram = np.exp(-term.kappa * np.linalg.norm(a - b, axis=-1)).reshape(weights.shape)
    limit = float(np.sum(weights * gram) / (8.0 * np.pi * term.kappa))
    scale = max(abs(limit), np.finfo(np.float64).tiny)
    return CutoffTraceResult(
        deltas=deltas,
        values=values,
        limit=limit,
        agreement=abs(values[-1] - limit) / scale,
        monotone=bool(np.all(np.diff(values) >= 0.0)),
    )


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    values, vectors = scipy.linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))[None, :]) @ vectors.T


def term_norms(term: TermFactorization) -> tuple[float, float]:
    """
    Exact trace norm and Hilbert-Schmidt norm of the (finite-rank) term on ``L^2(R^3)``.

    With the Gram matrices of the two families of Green functions the singular values are
    those of ``G_left^(1/2) K G_right^(1/2)``.
    """
    c = 1.0 / (8.0 * np.pi * term.kappa)
    w = term.left_weights
    gram_left = c * w[:, None] * w[None, :] * np.exp(-term.kappa * cdist(term.left_points, term.left_points))
    gram_right = c * np.exp(-term.kappa * cdist(term.right_points, term.right_points))
    core = _sqrt_psd(gram_left) @ term.middle @ _sqrt_psd(gram_right)
    singular = scipy.linalg.svdvals(core)
    return float(singular.sum()), float(np.sqrt(np.sum(singular**2)))


def _operator_norm(term: TermFactorization) -> float:
    """Norm of ``K`` as a map ``L^2(Gamma_j) -> L^2(Gamma_i)``."""
    scaled = np.sqrt(term.left_weights)[:, None] * term.middle / np.sqrt(term.right_weights)[None, :]
    return float(scipy.linalg.svdvals(scaled)[0])


@dataclass(frozen=True)
class TermBound:
    kind: Literal["schwarz", "imbedding"]
    value: float


def term_bound(term: TermFactorization, disc: Discretization) -> TermBound:
    """
    Bound on ``|term_limit(term)|``.

    For ``(+, -)`` and ``(-, +)`` the kernel factorizes on the axis, ``exp(-kappa |P_a - P_b|) =
    e_a e_b`` with ``e = exp(-kappa |x - c|)``, giving the Schwarz bound
    ``||K|| ||e||_(Gamma_i) ||e||_(Gamma_j) / (8 pi kappa)``. Terms touching ``Gamma_M`` use the
    imbedding bound ``|Gamma_M|^(1/2) ||h|| / (8 pi kappa)``.
    """
    prefactor = 1.0 / (8.0 * np.pi * term.kappa)
    if "M" not in (term.i, term.j):
        # Centre on the axis between the two tails
        c = 0.5 * (
            term.left_points[:, 0].min() if term.i == "plus" else term.left_points[:, 0].max()
        ) + 0.5 * (
            term.right_points[:, 0].min() if term.j == "plus" else term.right_points[:, 0].max()
        )
        e_left = np.exp(-term.kappa * np.abs(term.left_points[:, 0] - c))
        e_right = np.exp(-term.kappa * np.abs(term.right_points[:, 0] - c))
        norm_left = math.sqrt(float(np.sum(term.left_weights * e_left**2)))
        norm_right = math.sqrt(float(np.sum(term.right_weights * e_right**2)))
        return TermBound(
            kind="schwarz",
            value=prefactor * _operator_norm(term) * norm_left * norm_right,
        )

    length_m = math.sqrt(disc.block_length("M"))
    weighted = term.left_weights[:, None] * term.middle * term.exponential_gram()
    if term.i == "M":
        h = weighted.sum(axis=1) / term.left_weights
        norm = math.sqrt(float(np.sum(term.left_weights * h * h)))
    else:
        g = weighted.sum(axis=0) / term.right_weights
        norm = math.sqrt(float(np.sum(term.right_weights * g * g)))
    return TermBound(kind="imbedding", value=prefactor * length_m * norm)


# region Checks


@dataclass(frozen=True)
class CancellationResult:
    residuals: dict[str, float]
    """``max |(alpha - Q)^{-1} - (alpha - T)^{-1}|`` on the outer part of each tail."""

    relative: dict[str, float]
    """The same, relative to ``max |(alpha - T)^{-1}|`` on that part."""

    window: float


def cancellation_check(
    curve: ArcLengthCurve,
    alpha: float,
    kappa: float,
    disc: Discretization,
    *,
    window: float = 0.25,
    context: TraceContext | None = None,
) -> CancellationResult:
    """
    Compare the ``(+, +)`` and ``(-, -)`` blocks of ``(alpha - Q)^{-1}`` and ``(alpha - T)^{-1}``.

    After truncation the two agree only asymptotically, so the difference is taken on the
    nodes farther than ``window (L - |s_+-|)`` from ``Gamma_M``, through
    ``(alpha - Q)^{-1} - (alpha - T)^{-1} = (alpha - Q)^{-1} B (alpha - T)^{-1}``.
    """
    if not 0.0 <= window < 1.0:
        raise ConfigurationError(f"window must lie in [0, 1), got {window}.")
    if context is None:
        context = TraceContext(curve, alpha, kappa, disc)

    s_minus, s_plus = disc.straight_range
    L = disc.half_length
    outer = {
        "minus": np.flatnonzero(disc.grid < s_minus - window * (L + s_minus)),
        "plus": np.flatnonzero(disc.grid > s_plus + window * (L - s_plus)),
    }

    B = context.Q.b_part
    residuals: dict[str, float] = {}
    relative: dict[str, float] = {}
    for sign, idx in outer.items():
        if idx.size == 0 or not np.any(B):
            residuals[sign] = 0.0
            relative[sign] = 0.0
            continue
        difference = (
            context.resolvent_Q.matrix[idx] @ B @ context.resolvent_T.matrix[:, idx]
        )
        reference = float(np.max(np.abs(context.resolvent_T.matrix[np.ix_(idx, idx)])))
        residuals[sign] = float(np.max(np.abs(difference)))
        relative[sign] = residuals[sign] / reference
    return CancellationResult(residuals=residuals, relative=relative, window=window)


@dataclass(frozen=True)
class PositivityReport:
    kappas: list[float]
    min_eigenvalues: list[float]
    """Smallest eigenvalue of ``alpha - Q^kappa``."""

    kappa_check: float | None
    """Smallest listed ``kappa`` from which on every listed ``alpha - Q^kappa`` is positive definite."""

    b_min_entries: list[float]
    """Pointwise minimum of ``B^kappa`` over the grid."""

    b_min_eigenvalues: list[float]
    """Smallest eigenvalue of the weight-symmetrized ``B^kappa``; it may be slightly negative."""


def positivity_scan(
    curve: ArcLengthCurve,
    alpha: float,
    disc: Discretization,
    kappa_grid: Sequence[float],
) -> PositivityReport:
    kappas = sorted(float(k) for k in kappa_grid)
    min_eigenvalues = []
    b_min_entries = []
    b_min_eigenvalues = []
    for kappa in kappas:
        Q = assemble_Q(curve, disc.kernel_params(kappa), disc)
        min_eigenvalues.append(alpha - float(top_eigenvalues(Q, 1)[0]))
        b_min_entries.append(float(np.min(Q.b_part / Q.weights[None, :])))
        b_min_eigenvalues.append(
            float(scipy.linalg.eigh(Q.symmetrized(Q.b_part), eigvals_only=True, subset_by_index=[0, 0])[0])
        )

    kappa_check = None
    for kappa, value in zip(reversed(kappas), reversed(min_eigenvalues)):
        if value <= 0.0:
            break
        kappa_check = kappa
    log.info(
        f"Positivity scan: alpha - Q^kappa positive definite from kappa = {kappa_check}; "
        f"min B entry {min(b_min_entries):.3e}, min B eigenvalue {min(b_min_eigenvalues):.3e}."
    )
    return PositivityReport(
        kappas=kappas,
        min_eigenvalues=min_eigenvalues,
        kappa_check=kappa_check,
        b_min_entries=b_min_entries,
        b_min_eigenvalues=b_min_eigenvalues,
    )


@dataclass(frozen=True)
class HSNormReport:
    half_lengths: list[float]
    norms: list[float]
    decrements: list[float]
    """Relative change between consecutive ``L`` values."""


def hs_norm_B(
    curve: ArcLengthCurve,
    kappa: float,
    L_schedule: Sequence[float],
    *,
    spacing: float = 0.05,
) -> HSNormReport:
    """``||B||_HS^2 = sum_ij w_i w_j B(s_i, s_j)^2`` on grids of fixed spacing over ``[-L, L)``."""
    half_lengths = [float(L) for L in L_schedule]
    if any(b <= a for a, b in zip(half_lengths, half_lengths[1:])):
        raise ConfigurationError("L_schedule must be strictly increasing.")

    norms = []
    for L in half_lengths:
        num_points = round(2.0 * L / spacing)
        disc = Discretization.create(L, _next_power_of_two(num_points), curve.straight_range)
        on_grid = curve.resample(disc.grid)
        B = assemble_B(on_grid, disc.kernel_params(kappa), disc)
        # B already carries w_j; multiply the rows by w_i
        norms.append(float(np.sqrt(np.sum(disc.weights[:, None] * B * B))))

    decrements = [
        abs(b - a) / max(abs(b), np.finfo(np.float64).tiny) for a, b in zip(norms, norms[1:])
    ]
    return HSNormReport(half_lengths=half_lengths, norms=norms, decrements=decrements)


def _next_power_of_two(n: int) -> int:
    return 1 << max(int(n) - 1, 1).bit_length()


# endregion

# region Report


@dataclass(frozen=True)
class BlockEntry:
    i: Block
    j: Block
    gamma_limit: float
    sigma_limit: float
    difference_limit: float
    bound_kind: str
    gamma_bound: float
    sigma_bound: float
    trace_norm: float
    hs_norm: float
    cutoff: CutoffTraceResult | None
    within_bound: bool


@dataclass(frozen=True)
class TraceReport:
    kappa: float
    alpha: float
    entries: list[BlockEntry]
    cancellation: CancellationResult
    difference_symmetry: float
    """``max |D - D^T| / max |D|`` of the total difference kernel on the evaluation points."""

    verdict: bool
    lemma_prefactor: float
    """``1 / (8 pi kappa)``, the prefactor used throughout."""

    published_prefactor: float
    """``pi^4 / kappa^2``, carried as an annotation only."""

    gamma_m_length: float
    notes: list[str] = field(default_factory=list)


def default_delta_schedule(kappa: float) -> list[float]:
    return [5.0 / kappa, 10.0 / kappa, 20.0 / kappa, 40.0 / kappa]


def default_evaluation_points(disc: Discretization, curve: ArcLengthCurve) -> np.ndarray:
    """A fixed lattice of points around ``Gamma_M`` away from the curve."""
    middle = curve.points[disc.blocks["M"]]
    lo = middle.min(axis=0) - 1.0
    hi = middle.max(axis=0) + 1.0
    axes = [np.linspace(lo[k], hi[k], 4) + 0.137 for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    keep = cdist(grid, curve.points).min(axis=1) > 2.0 * disc.spacing
    return grid[keep]


def difference_kernel(context: TraceContext, points: np.ndarray) -> np.ndarray:
    """Kernel of the summed difference over ``X`` between points ``x_p`` and ``x_q``."""
    disc = context.disc
    mask = np.ones((disc.num_points, disc.num_points), dtype=bool)
    for i, j in EXCLUDED_PAIRS:
        mask[np.ix_(disc.blocks[i], disc.blocks[j])] = False

    total = np.zeros((points.shape[0], points.shape[0]))
    for source, sign in (("Q_on_Gamma", 1.0), ("T_on_Sigma", -1.0)):
        g = green_radial(context.kappa, cdist(points, context.points(source)))
        K = np.where(mask, context.resolvent(source).matrix, 0.0)
        total += sign * (g * disc.weights[None, :]) @ K @ g.T
    return total


def trace_bound_report(
    curve: ArcLengthCurve,
    alpha: float,
    kappa: float,
    disc: Discretization,
    *,
    delta_schedule: Sequence[float] | None = None,
    max_quadrature_nodes: int = 48,
    cutoff_terms: bool = True,
    cancellation_window: float = 0.25,
    workers: int = 1,
) -> TraceReport:
    context = TraceContext(curve, alpha, kappa, disc)
    if delta_schedule is None:
        delta_schedule = default_delta_schedule(kappa)

    def entry(pair: tuple[Block, Block]) -> BlockEntry:
        i, j = pair
        gamma_term = context.term(i, j, "Q_on_Gamma")
        sigma_term = context.term(i, j, "T_on_Sigma")
        gamma_limit, sigma_limit = term_limit(gamma_term), term_limit(sigma_term)
        gamma_bound, sigma_bound = term_bound(gamma_term, disc), term_bound(sigma_term, disc)
        trace_norm, hs_norm = term_norms(gamma_term)
        cutoff = (
            cutoff_trace(gamma_term, delta_schedule, max_quadrature_nodes=max_quadrature_nodes)
            if cutoff_terms
            else None
        )
        slack = 1.0e-12 * max(gamma_bound.value, sigma_bound.value, 1.0e-300)
        return BlockEntry(
            i=i,
            j=j,
            gamma_limit=gamma_limit,
            sigma_limit=sigma_limit,
            difference_limit=gamma_limit - sigma_limit,
            bound_kind=gamma_bound.kind,
            gamma_bound=gamma_bound.value,
            sigma_bound=sigma_bound.value,
            trace_norm=trace_norm,
            hs_norm=hs_norm,
            cutoff=cutoff,
            within_bound=abs(gamma_limit) <= gamma_bound.value + slack
            and abs(sigma_limit) <= sigma_bound.value + slack,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(entry, X_PAIRS))
    else:
        entries = [entry(pair) for pair in X_PAIRS]

    cancellation = cancellation_check(
        curve, alpha, kappa, disc, window=cancellation_window, context=context
    )

    points = default_evaluation_points(disc, curve)
    D = difference_kernel(context, points)
    scale = float(np.max(np.abs(D)))
    symmetry = float(np.max(np.abs(D - D.T))) / scale if scale > 0.0 else 0.0

    verdict = all(e.within_bound for e in entries)
    notes = []
    if not verdict:
        bad = [f"({e.i}, {e.j})" for e in entries if not e.within_bound]
        notes.append(
            f"Bound violated for {', '.join(bad)}: this points at a discretization fault; refine h or increase L."
        )
        log.warning(notes[-1])

    return TraceReport(
        kappa=kappa,
        alpha=alpha,
        entries=entries,
        cancellation=cancellation,
        difference_symmetry=symmetry,
        verdict=verdict,
        lemma_prefactor=1.0 / (8.0 * np.pi * kappa),
        published_prefactor=np.pi**4 / kappa**2,
        gamma_m_length=disc.block_length("M"),
        notes=notes,
    )


# endregion
