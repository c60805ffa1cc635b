from __future__ import annotations

import logging
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Annotated, Literal

import nshconfig as C
import numpy as np
from scipy.spatial.distance import pdist
from typing_extensions import TypeAliasType, override

from ..errors import ConfigurationError, SelfIntersectionError, TubularRadiusWarning
from .curve import ArcLengthCurve

log = logging.getLogger(__name__)


class PairSamplerConfigBase(C.Config, ABC):
    @abstractmethod
    def node_indices(self, num_points: int) -> np.ndarray:
        """Indices of the grid nodes whose pairs are examined."""
        ...


class StridePairSamplerConfig(PairSamplerConfigBase):
    """Every pair among grid nodes taken at a uniform stride."""

    kind: Literal["stride"] = "stride"

    max_points: int = 1024
    """Upper bound on the number of nodes kept."""

    @override
    def node_indices(self, num_points):
        stride = max(1, math.ceil(num_points / self.max_points))
        indices = np.arange(0, num_points, stride)
        if indices[-1] != num_points - 1:
            indices = np.append(indices, num_points - 1)
        return indices


class RandomPairSamplerConfig(PairSamplerConfigBase):
    """Every pair among a seeded random subset of grid nodes (endpoints always included)."""

    kind: Literal["random"] = "random"

    max_points: int = 1024
    """Size of the random subset."""

    seed: int = 0
    """Seed for the random generator."""

    @override
    def node_indices(self, num_points):
        if num_points <= self.max_points:
            return np.arange(num_points)
        rng = np.random.default_rng(self.seed)
        chosen = rng.choice(np.arange(1, num_points - 1), size=self.max_points - 2, replace=False)
        return np.sort(np.concatenate([[0, num_points - 1], chosen]))


PairSamplerConfig = TypeAliasType(
    "PairSamplerConfig",
    Annotated[
        StridePairSamplerConfig | RandomPairSamplerConfig,
        C.Field(discriminator="kind"),
    ],
)


def _pairs(curve: ArcLengthCurve, sampler: PairSamplerConfigBase):
    idx = sampler.node_indices(curve.num_points)
    s = curve.grid[idx]
    i, j = np.triu_indices(idx.shape[0], k=1)
    chord = pdist(curve.points[idx])
    return s[i], s[j], chord


@dataclass(frozen=True)
class BilipschitzReport:
    c_estimate: float
    """Smallest chord/arc ratio over sampled pairs, capped by the tangent limit 1."""

    passed: bool

    worst_pair: tuple[float, float] | None
    """Pair attaining ``c_estimate`` (``None`` if the tangent limit is the minimum)."""

    far_ratio: float
    """Smallest ratio among pairs at (nearly) the largest sampled separation."""

    mid_ratio: float
    """Smallest ratio among pairs at about half the largest sampled separation."""

    min_self_distance: float
    """Smallest chord among pairs at least ``self_distance_separation`` apart along the curve."""


def check_bilipschitz(
    curve: ArcLengthCurve,
    pair_sampler: PairSamplerConfigBase | None = None,
    *,
    min_separation: float | None = None,
    floor: float = 1.0e-6,
    decay_tolerance: float = 0.75,
    self_distance_separation: float = 1.0,
) -> BilipschitzReport:
    """
    Estimate the bi-Lipschitz constant ``c`` in ``|Gamma(s) - Gamma(s')| >= c |s - s'|``.

    Besides ``c in (0, 1]`` the check requires that the ratio does not keep decreasing on the
    farthest sampled pairs: a U-shaped curve has its smallest ratio exactly there.
    """
    if pair_sampler is None:
        pair_sampler = StridePairSamplerConfig()
    if min_separation is None:
        min_separation = 2.0 * curve.spacing

    s, sp, chord = _pairs(curve, pair_sampler)
    arc = sp - s

    keep = arc > min_separation
    if not keep.any():
        raise ConfigurationError("No sampled pair is separated by more than the diagonal cutoff.")
    s, sp, chord, arc = s[keep], sp[keep], chord[keep], arc[keep]
    ratio = chord / arc

    k = int(np.argmin(ratio))
    if ratio[k] < floor:
        raise SelfIntersectionError(
            f"Self-intersection: |Gamma(s) - Gamma(s')| / |s - s'| = {ratio[k]:.3e} at "
            f"(s, s') = ({s[k]:.6g}, {sp[k]:.6g}).",
            pair=(float(s[k]), float(sp[k])),
            ratio=float(ratio[k]),
        )

    c_estimate = min(float(ratio[k]), 1.0)
    worst_pair = (float(s[k]), float(sp[k])) if ratio[k] < 1.0 else None

    max_arc = float(arc.max())
    far = arc >= 0.9 * max_arc
    mid = np.abs(arc - 0.5 * max_arc) <= 0.05 * max_arc
    far_ratio = float(ratio[far].min())
    mid_ratio = float(ratio[mid].min()) if mid.any() else far_ratio
    decaying = far_ratio < decay_tolerance * mid_ratio

    separated = arc >= self_distance_separation
    min_self_distance = float(chord[separated].min()) if separated.any() else math.inf

    passed = 0.0 < c_estimate <= 1.0 and not decaying
    if decaying:
        log.warning(
            f"Chord/arc ratio decays on far pairs ({far_ratio:.4g} vs {mid_ratio:.4g} at half the "
            "separation): the curve looks U-shaped."
        )
    return BilipschitzReport(
        c_estimate=c_estimate,
        passed=passed,
        worst_pair=worst_pair,
        far_ratio=far_ratio,
        mid_ratio=mid_ratio,
        min_self_distance=min_self_distance,
    )


@dataclass(frozen=True)
class AsymptoticReport:
    passed: bool
    worst_pair: tuple[float, float]
    worst_margin: float
    """``RHS - LHS`` at ``worst_pair``; negative when the inequality fails."""

    num_pairs: int


def in_asymptotic_set(
    s: np.ndarray,
    sp: np.ndarray,
    omega: float,
    epsilon: float,
) -> np.ndarray:
    """Membership of ``(s, s')`` in the set ``S_{omega, epsilon}``."""
    far = np.abs(s + sp) > epsilon * (1.0 + omega) / (1.0 - omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = s / sp
    cone = (quotient > omega) & (quotient < 1.0 / omega)
    return np.where(far, cone, np.abs(s - sp) < epsilon)


def check_asymptotic_condition(
    curve: ArcLengthCurve,
    omega: float,
    epsilon: float,
    mu: float,
    d: float,
    *,
    pair_sampler: PairSamplerConfigBase | None = None,
    tolerance: float = 1.0e-12,
) -> AsymptoticReport:
    """
    Evaluate the asymptotic-straightness inequality

        1 - |Gamma(s) - Gamma(s')| / |s - s'| <= d |s - s'| / ((|s - s'| + 1) (1 + (s^2 + s'^2)^mu)^(1/2))

    on the sampled pairs of ``S_{omega, epsilon}``.
    """
    if not 0.0 < omega < 1.0:
        raise ConfigurationError(f"omega must lie in (0, 1), got {omega}.")
    if not epsilon > 0.0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}.")
    if mu < 0.0:
        raise ConfigurationError(f"mu must be non-negative, got {mu}.")
    if pair_sampler is None:
        pair_sampler = StridePairSamplerConfig(max_points=512)

    s, sp, chord = _pairs(curve, pair_sampler)
    member = in_asymptotic_set(s, sp, omega, epsilon) & (s != sp)
    if not member.any():
        raise ConfigurationError(
            f"No sampled pair lies in S_(omega={omega}, epsilon={epsilon}); refine the grid."
        )
    s, sp, chord = s[member], sp[member], chord[member]

    arc = np.abs(s - sp)
    lhs = 1.0 - chord / arc
    rhs = d * arc / ((arc + 1.0) * np.sqrt(1.0 + (s * s + sp * sp) ** mu))
    margin = rhs - lhs

    k = int(np.argmin(margin))
    return AsymptoticReport(
        passed=bool(margin[k] >= -tolerance),
        worst_pair=(float(s[k]), float(sp[k])),
        worst_margin=float(margin[k]),
        num_pairs=int(member.sum()),
    )


@dataclass(frozen=True)
class TubularRadiusEstimate:
    r0: float
    curvature_bound: float
    """``1 / (2 max gamma)``, infinite for a straight curve."""

    self_distance_bound: float
    """Half the smallest self-distance found by the bi-Lipschitz check."""


def estimate_r0(curve: ArcLengthCurve) -> TubularRadiusEstimate:
    """``r0 = min(1 / (2 max gamma), d_self / 2)``."""
    gamma_max = float(curve.curvature.max())
    curvature_bound = math.inf if gamma_max <= 0.0 else 1.0 / (2.0 * gamma_max)
    if curve.is_straight:
        self_distance_bound = math.inf
    else:
        self_distance_bound = 0.5 * check_bilipschitz(curve).min_self_distance
    return TubularRadiusEstimate(
        r0=min(curvature_bound, self_distance_bound),
        curvature_bound=curvature_bound,
        self_distance_bound=self_distance_bound,
    )


def shifted_curve_point(
    curve: ArcLengthCurve,
    s: np.ndarray | float,
    xi: float,
    eta: float,
    *,
    r0: float | None = None,
) -> np.ndarray:
    """
    ``Gamma(s) + xi b(s) + eta n(s)`` with the rotated binormal ``b`` and normal ``n``.

    Returns shape ``(3,)`` for scalar ``s`` and ``(n, 3)`` otherwise.
    """
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    if np.any(s < curve.grid[0]) or np.any(s > curve.grid[-1]):
        raise ConfigurationError(
            f"s must lie in the grid range [{curve.grid[0]:.6g}, {curve.grid[-1]:.6g}]."
        )

    if r0 is None:
        r0 = curve.tubular_radius.r0
    if (r := math.hypot(xi, eta)) >= r0:
        warnings.warn(
            f"Shift radius {r:.4g} is not below the tubular-radius estimate {r0:.4g}; "
            "the shifted curve may meet Gamma.",
            TubularRadiusWarning,
            stacklevel=2,
        )

    _, normals, binormals = curve.frames_at(s)
    points = curve.points_at(s) + xi * binormals + eta * normals
    return points[0] if scalar else points
