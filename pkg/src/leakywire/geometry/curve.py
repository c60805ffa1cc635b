from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.spatial.transform import Rotation

from ..errors import ConfigurationError, GeometryError
from .base import CurveSpecBase

if TYPE_CHECKING:
    from .checks import TubularRadiusEstimate

log = logging.getLogger(__name__)

_AXIS = np.array([1.0, 0.0, 0.0])


class ArcLengthMap:
    """
    The map ``s -> Gamma(s)`` for a curve spec, with ``s`` the arc length measured from the
    spec's origin parameter.

    The cumulative length is tabulated with per-segment Gauss-Legendre quadrature; the
    inverse is seeded from a monotone cubic interpolant of the table and then refined with
    Newton steps so that the points are accurate to near machine precision.
    """

    def __init__(
        self,
        spec: CurveSpecBase,
        *,
        table_size: int = 2048,
        gauss_order: int = 8,
        speed_floor: float = 1.0e-10,
    ):
        self.spec = spec
        self.extends = spec.extends_along_axis()
        self._nodes, self._weights = np.polynomial.legendre.leggauss(gauss_order)

        self.t_lo, self.t_hi = spec.parameter_interval()
        self.t_origin = spec.origin_parameter()

        if spec.is_straight():
            self.t_lo = self.t_hi = self.t_origin
            self.s_lo = self.s_hi = 0.0
            self._unit_speed = True
        elif spec.arclength_parameter:
            self.s_lo = self.t_lo - self.t_origin
            self.s_hi = self.t_hi - self.t_origin
            self._unit_speed = True
        else:
            self._unit_speed = False
            self._build_table(table_size, speed_floor)
            s0 = float(self._cumulative(np.array([self.t_origin]))[0])
            self._s_origin = s0
            self.s_lo = -s0
            self.s_hi = float(self._table_s[-1]) - s0

        self.p_lo = spec.evaluate(np.array([self.t_lo]))[0]
        self.p_hi = spec.evaluate(np.array([self.t_hi]))[0]

    # region Tabulation
    def speed(self, t: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.spec.derivative(t), axis=-1)

    def _build_table(self, table_size: int, speed_floor: float):
        t_table = np.linspace(self.t_lo, self.t_hi, table_size + 1)
        half = 0.5 * np.diff(t_table)
        mid = 0.5 * (t_table[1:] + t_table[:-1])
        t_nodes = mid[:, None] + half[:, None] * self._nodes[None, :]

        speeds = self.speed(t_nodes.ravel()).reshape(t_nodes.shape)
        node_speeds = self.speed(t_table)

        scale = float(np.median(node_speeds))
        if not np.isfinite(scale) or scale <= 0.0:
            raise GeometryError("Curve has zero speed almost everywhere.")
        if (smallest := float(node_speeds.min())) < speed_floor * scale:
            location = float(t_table[int(np.argmin(node_speeds))])
            raise GeometryError(
                f"Degenerate tangent: |dGamma/dt| = {smallest:.3e} at t = {location:.6g}.",
                location=location,
            )

        segments = half * (speeds @ self._weights)
        self._table_t = t_table
        self._table_s = np.concatenate([[0.0], np.cumsum(segments)])
        self._inverse = PchipInterpolator(self._table_s, t_table)

    def _cumulative(self, t: np.ndarray) -> np.ndarray:
        """Arc length from ``t_lo`` to ``t``."""
        k = np.clip(
            np.searchsorted(self._table_t, t, side="right") - 1,
            0,
            self._table_t.shape[0] - 2,
        )
        a = self._table_t[k]
        half = 0.5 * (t - a)
        mid = 0.5 * (t + a)
        t_nodes = mid[:, None] + half[:, None] * self._nodes[None, :]
        speeds = self.speed(t_nodes.ravel()).reshape(t_nodes.shape)
        return self._table_s[k] + half * (speeds @ self._weights)

    # endregion

    def parameter_of(self, s: np.ndarray, *, max_iterations: int = 12) -> np.ndarray:
        """Parameter ``t`` with arc length ``s`` from the origin, for ``s`` in ``[s_lo, s_hi]``."""
        s = np.asarray(s, dtype=np.float64)
        if self._unit_speed:
            return s + self.t_origin

        target = s + self._s_origin
        t = self._inverse(target)
        tol = 4.0 * np.finfo(np.float64).eps * max(1.0, float(self._table_s[-1]))
        for _ in range(max_iterations):
            residual = self._cumulative(t) - target
            t = np.clip(t - residual / self.speed(t), self.t_lo, self.t_hi)
            if np.max(np.abs(residual), initial=0.0) <= tol:
                break
        return t

    def evaluate(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Points, unit tangents and ``d^2Gamma/ds^2`` at arc lengths ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        points = np.empty((s.shape[0], 3))
        d1 = np.empty((s.shape[0], 3))
        d2 = np.zeros((s.shape[0], 3))

        below = s < self.s_lo
        above = s > self.s_hi
        inside = ~(below | above)

        if (below.any() or above.any()) and not self.extends:
            bad = float(s[below | above][0])
            raise GeometryError(
                f"Arc length {bad:.6g} lies outside [{self.s_lo:.6g}, {self.s_hi:.6g}] "
                "and the curve does not extend along the axis.",
                location=bad,
            )

        if inside.any():
            t = self.parameter_of(s[inside])
            g1 = self.spec.derivative(t)
            g2 = self.spec.second_derivative(t)
            v = np.linalg.norm(g1, axis=-1)
            tangent = g1 / v[:, None]
            normal_part = g2 - np.sum(g2 * tangent, axis=-1, keepdims=True) * tangent
            points[inside] = self.spec.evaluate(t)
            d1[inside] = tangent
            d2[inside] = normal_part / (v * v)[:, None]

        # Straight tails along Sigma
        points[below] = self.p_lo + (s[below] - self.s_lo)[:, None] * _AXIS
        points[above] = self.p_hi + (s[above] - self.s_hi)[:, None] * _AXIS
        d1[below | above] = _AXIS
        return points, d1, d2


def parallel_transport_frames(tangents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Rotation-minimizing ``(normal, binormal)`` frames along a sequence of unit tangents.

    The frame starts from the projection of ``+y`` (``+z`` if the first tangent is close to
    ``y``) and is carried from node to node by the rotation taking one tangent onto the next.
    On straight pieces the frame is constant; on planar curves the binormal is constant.
    """
    n_points = tangents.shape[0]
    t0 = tangents[0]
    reference = np.array([0.0, 1.0, 0.0]) if abs(t0[1]) < 0.9 else np.array([0.0, 0.0, 1.0])
    n0 = reference - np.dot(reference, t0) * t0
    n0 /= np.linalg.norm(n0)

    axes = np.cross(tangents[:-1], tangents[1:])
    sines = np.linalg.norm(axes, axis=-1)
    cosines = np.sum(tangents[:-1] * tangents[1:], axis=-1)
    angles = np.arctan2(sines, cosines)
    rotvecs = np.zeros_like(axes)
    turning = sines > 1.0e-15
    rotvecs[turning] = axes[turning] / sines[turning, None] * angles[turning, None]
    matrices = Rotation.from_rotvec(rotvecs).as_matrix() if n_points > 1 else np.zeros((0, 3, 3))

    normals = np.empty_like(tangents)
    normals[0] = n0
    n = n0
    for i in range(n_points - 1):
        n = matrices[i] @ n
        t = tangents[i + 1]
        n = n - np.dot(n, t) * t
        n /= np.linalg.norm(n)
        normals[i + 1] = n

    binormals = np.cross(tangents, normals)
    return normals, binormals


@dataclass(frozen=True, eq=False)
class ArcLengthCurve:
    """A curve sampled on an arc-length grid, with rotated frames and curvature."""

    grid: np.ndarray
    """Arc-length grid ``s_i``, strictly increasing."""

    points: np.ndarray
    """``Gamma(s_i)``, shape ``(n, 3)``."""

    tangents: np.ndarray
    normals: np.ndarray
    binormals: np.ndarray

    curvature: np.ndarray
    """``gamma(s_i) = |Gamma''(s_i)|``."""

    straight_range: tuple[float, float] | None
    """
    ``(s_-, s_+)`` with ``Gamma`` on ``Sigma`` outside the interval, or ``None`` when the curve
    does not extend along the axis. The straight line uses ``(0, 0)``.
    """

    spec: CurveSpecBase = field(repr=False)
    arclength_map: ArcLengthMap = field(repr=False)

    @property
    def num_points(self) -> int:
        return int(self.grid.shape[0])

    @property
    def spacing(self) -> float:
        return float(np.mean(np.diff(self.grid)))

    @property
    def is_straight(self) -> bool:
        return self.spec.is_straight()

    @property
    def deformation_length(self) -> float:
        m = self.arclength_map
        return m.s_hi - m.s_lo

    def points_at(self, s: np.ndarray | float) -> np.ndarray:
        return self.arclength_map.evaluate(np.atleast_1d(s))[0]

    def tangents_at(self, s: np.ndarray | float) -> np.ndarray:
        return self.arclength_map.evaluate(np.atleast_1d(s))[1]

    def curvature_at(self, s: np.ndarray | float) -> np.ndarray:
        return np.linalg.norm(self.arclength_map.evaluate(np.atleast_1d(s))[2], axis=-1)

    def curvature_derivatives_at(
        self,
        s: np.ndarray | float,
        *,
        step: float = 1.0e-3,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(gamma, gamma', gamma'')`` at ``s``, derivatives by central differences."""
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        stacked = np.concatenate([s - step, s, s + step])
        if not (m := self.arclength_map).extends:
            stacked = np.clip(stacked, m.s_lo, m.s_hi)
        g = self.curvature_at(stacked).reshape(3, -1)
        first = (g[2] - g[0]) / (2 * step)
        second = (g[2] - 2 * g[1] + g[0]) / (step * step)
        return g[1], first, second

    def frames_at(self, s: np.ndarray | float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        ``(tangent, normal, binormal)`` at arbitrary ``s``.

        The normal is interpolated linearly between grid nodes and re-orthonormalized against
        the exact tangent.
        """
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        tangents = self.tangents_at(s)
        normals = np.stack(
            [np.interp(s, self.grid, self.normals[:, k]) for k in range(3)], axis=-1
        )
        normals -= np.sum(normals * tangents, axis=-1, keepdims=True) * tangents
        normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
        return tangents, normals, np.cross(tangents, normals)

    def resample(self, grid: np.ndarray) -> ArcLengthCurve:
        """The same curve sampled on another arc-length grid."""
        return _sample(self.spec, self.arclength_map, np.asarray(grid, dtype=np.float64))

    @cached_property
    def tubular_radius(self) -> TubularRadiusEstimate:
        from .checks import estimate_r0

        return estimate_r0(self)


def _sample(spec: CurveSpecBase, arclength_map: ArcLengthMap, grid: np.ndarray) -> ArcLengthCurve:
    if grid.ndim != 1 or grid.shape[0] < 2 or np.any(np.diff(grid) <= 0.0):
        raise ConfigurationError("Arc-length grid must be one-dimensional and strictly increasing.")

    points, tangents, d2 = arclength_map.evaluate(grid)
    normals, binormals = parallel_transport_frames(tangents)

    if spec.is_straight():
        straight_range = (0.0, 0.0)
    elif arclength_map.extends:
        straight_range = (arclength_map.s_lo, arclength_map.s_hi)
    else:
        straight_range = None

    return ArcLengthCurve(
        grid=grid,
        points=points,
        tangents=tangents,
        normals=normals,
        binormals=binormals,
        curvature=np.linalg.norm(d2, axis=-1),
        straight_range=straight_range,
        spec=spec,
        arclength_map=arclength_map,
    )


def _validate_compact_deformation(spec: CurveSpecBase, arclength_map: ArcLengthMap):
    if spec.is_straight():
        return

    lo, hi = spec.parameter_interval()
    tol = float(getattr(spec, "axis_tolerance", 1.0e-8))

    if spec.extends_along_axis():
        ends = spec.evaluate(np.array([lo, hi]))
        slopes = spec.derivative(np.array([lo, hi]))
        slopes = slopes / np.linalg.norm(slopes, axis=-1, keepdims=True)
        off_axis = np.linalg.norm(ends[:, 1:], axis=-1)
        misaligned = np.linalg.norm(slopes - _AXIS, axis=-1)
        for k, t in enumerate((lo, hi)):
            if off_axis[k] > tol or misaligned[k] > tol:
                raise GeometryError(
                    f"Non-compact deformation: at t = {t:.6g} the curve is {off_axis[k]:.3e} off the "
                    f"x-axis with tangent deviation {misaligned[k]:.3e}; it cannot be continued along Sigma.",
                    location=t,
                )

    if (rho := spec.deformation_bound) is not None:
        t = np.linspace(lo, hi, 1025)
        distance = np.linalg.norm(spec.evaluate(t)[:, 1:], axis=-1)
        if (worst := float(distance.max())) > rho:
            location = float(t[int(np.argmax(distance))])
            raise GeometryError(
                f"Deformation reaches distance {worst:.6g} from the axis, above the bound {rho}.",
                location=location,
            )


def reparametrize_arclength(
    spec: CurveSpecBase,
    target_spacing: float,
    *,
    margin: float | None = None,
) -> ArcLengthCurve:
    """
    Sample ``spec`` on a uniform arc-length grid.

    The grid covers the deformation plus ``margin`` of straight tail on each side (nothing
    for curves that do not extend along the axis). The spacing is at most ``target_spacing``
    and within 10% of it.
    """
    if not (target_spacing > 0.0 and math.isfinite(target_spacing)):
        raise ConfigurationError(f"target_spacing must be positive, got {target_spacing}.")

    arclength_map = ArcLengthMap(spec)
    _validate_compact_deformation(spec, arclength_map)

    if arclength_map.extends:
        if margin is None:
            margin = max(1.0, 10.0 * target_spacing)
        a, b = arclength_map.s_lo - margin, arclength_map.s_hi + margin
    else:
        a, b = arclength_map.s_lo, arclength_map.s_hi

    n_intervals = max(math.ceil((b - a) / target_spacing), 10)
    grid = np.linspace(a, b, n_intervals + 1)
    log.debug(
        f"Sampling {type(spec).__name__} on {grid.shape[0]} nodes, spacing {(b - a) / n_intervals:.4g}."
    )
    return _sample(spec, arclength_map, grid)
