from __future__ import annotations

import importlib
import logging
import math
from collections.abc import Callable
from typing import Any, ClassVar, Literal

import nshconfig as C
import numpy as np
from pydantic.json_schema import SkipJsonSchema
from typing_extensions import override

from ..errors import ConfigurationError
from ..registry import curve_registry
from .base import CurveSpecBase

log = logging.getLogger(__name__)


@curve_registry.register
class StraightLineConfig(CurveSpecBase):
    """The undeformed wire ``Gamma(s) = (s, 0, 0)``."""

    family: Literal["straight_line"] = "straight_line"

    arclength_parameter: ClassVar[bool] = True

    @override
    def parameter_interval(self):
        return (0.0, 0.0)

    @override
    def origin_parameter(self):
        return 0.0

    @override
    def is_straight(self):
        return True

    @override
    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.zeros((t.shape[0], 3))
        out[:, 0] = t
        return out

    @override
    def derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.zeros((t.shape[0], 3))
        out[:, 0] = 1.0
        return out

    @override
    def second_derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        return np.zeros((t.shape[0], 3))


@curve_registry.register
class PlanarBumpConfig(CurveSpecBase):
    """The graph ``x -> (x, a exp(-x^2 / w^2), 0)``, truncated where the bump is negligible."""

    family: Literal["planar_bump"] = "planar_bump"

    amplitude: float
    """Height ``a`` of the bump. May be negative."""

    width: C.PositiveFloat
    """Width ``w`` of the Gaussian profile."""

    support_tolerance: C.PositiveFloat = 1.0e-15
    """The bump is treated as zero (the curve as straight) where ``|a| exp(-x^2/w^2)`` drops below this value."""

    def __post_init__(self):
        if self.amplitude == 0.0:
            raise ConfigurationError(
                "A planar bump with zero amplitude is the straight line; use the straight_line family."
            )

    @override
    def parameter_interval(self):
        ratio = abs(self.amplitude) / self.support_tolerance
        if ratio <= 1.0:
            # Already below tolerance everywhere; keep a tiny interval around the origin.
            half = self.width
        else:
            half = self.width * math.sqrt(math.log(ratio))
        return (-half, half)

    @override
    def origin_parameter(self):
        return 0.0

    def _profile(self, t: np.ndarray) -> np.ndarray:
        return self.amplitude * np.exp(-((t / self.width) ** 2))

    @override
    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.zeros((t.shape[0], 3))
        out[:, 0] = t
        out[:, 1] = self._profile(t)
        return out

    @override
    def derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.zeros((t.shape[0], 3))
        out[:, 0] = 1.0
        out[:, 1] = -2.0 * t / self.width**2 * self._profile(t)
        return out

    @override
    def second_derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        w2 = self.width**2
        out = np.zeros((t.shape[0], 3))
        out[:, 1] = (4.0 * t**2 / w2**2 - 2.0 / w2) * self._profile(t)
        return out


@curve_registry.register
class CircularArcJointConfig(CurveSpecBase):
    """
    A planar detour made of three circular arcs of radius ``R``.

    Starting from ``Sigma`` the curve turns left by ``theta``, right by ``2 theta`` and
    left by ``theta`` again, which brings it back onto ``Sigma`` with tangent ``+x``.
    The result is ``C^1`` with piecewise constant curvature ``1/R`` and is symmetric
    about its apex, which sits at ``x = 0``. The parameter is arc length measured from the apex.
    """

    family: Literal["circular_arc_joint"] = "circular_arc_joint"

    arclength_parameter: ClassVar[bool] = True

    bend_angle: float
    """Turning angle ``theta`` of the outer arcs, in ``(0, pi/2]``."""

    radius: C.PositiveFloat
    """Radius ``R`` of all three arcs."""

    def __post_init__(self):
        if not (0.0 < self.bend_angle <= math.pi / 2):
            raise ConfigurationError(
                f"bend_angle must lie in (0, pi/2], got {self.bend_angle}."
            )

    @property
    def arc_length(self) -> float:
        return self.bend_angle * self.radius

    @property
    def apex_height(self) -> float:
        return 2.0 * self.radius * (1.0 - math.cos(self.bend_angle))

    @override
    def parameter_interval(self):
        half = 2.0 * self.arc_length
        return (-half, half)

    @override
    def origin_parameter(self):
        return 0.0

    def _pieces(self, t: np.ndarray):
        theta, R = self.bend_angle, self.radius
        u = np.clip(t + 2.0 * self.arc_length, 0.0, 4.0 * self.arc_length)
        first = u < self.arc_length
        last = u > 3.0 * self.arc_length
        middle = ~(first | last)

        # Heading angle of the tangent along the three arcs
        heading = np.where(
            first,
            u / R,
            np.where(middle, 2.0 * theta - u / R, u / R - 4.0 * theta),
        )
        # Turning direction: +1 for left, -1 for right
        turn = np.where(middle, -1.0, 1.0)
        return u, heading, turn, first, middle, last

    @override
    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        theta, R = self.bend_angle, self.radius
        u, heading, _, first, middle, last = self._pieces(t)

        x0 = -2.0 * R * math.sin(theta)
        c1 = np.array([x0, R])
        c2 = np.array([0.0, self.apex_height - R])
        c3 = np.array([-x0, R])

        xy = np.empty((t.shape[0], 2))
        # Left turns: P = C + R (sin psi, -cos psi); right turn: P = C + R (-sin psi, cos psi)
        left = np.stack([np.sin(heading), -np.cos(heading)], axis=-1) * R
        right = -left
        xy[first] = c1 + left[first]
        xy[middle] = c2 + right[middle]
        xy[last] = c3 + left[last]

        out = np.zeros((t.shape[0], 3))
        out[:, :2] = xy
        return out

    @override
    def derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        _, heading, _, _, _, _ = self._pieces(t)
        out = np.zeros((t.shape[0], 3))
        out[:, 0] = np.cos(heading)
        out[:, 1] = np.sin(heading)
        return out

    @override
    def second_derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        _, heading, turn, _, _, _ = self._pieces(t)
        out = np.zeros((t.shape[0], 3))
        out[:, 0] = -turn * np.sin(heading) / self.radius
        out[:, 1] = turn * np.cos(heading) / self.radius
        return out


def resolve_curve_map(map: str | Callable[..., Any]) -> Callable[[np.ndarray], np.ndarray]:
    """Resolve ``"package.module:function"`` to the callable it names."""
    if callable(map):
        return map

    module_name, sep, attr = map.partition(":")
    if not sep or not module_name or not attr:
        raise ConfigurationError(
            f"Curve map {map!r} must have the form 'package.module:function'."
        )

    try:
        module = importlib.import_module(module_name)
    except ImportError as e:
        raise ConfigurationError(f"Could not import module {module_name!r}: {e}") from e

    if (fn := getattr(module, attr, None)) is None or not callable(fn):
        raise ConfigurationError(f"{module_name!r} has no callable named {attr!r}.")
    return fn


@curve_registry.register
class UserParametricConfig(CurveSpecBase):
    """
    A user-supplied map ``t -> Gamma(t)`` on a compact parameter interval.

    The map receives a 1-D array of parameters and must return an array of shape ``(n, 3)``.
    """

    family: Literal["user_parametric"] = "user_parametric"

    map: str | SkipJsonSchema[Callable[..., Any]]
    """The map, either a callable or an import path of the form ``"package.module:function"``."""

    interval: tuple[float, float]
    """Parameter interval carrying the deformation."""

    origin: float | None = None
    """Parameter where arc length is zero. Defaults to the midpoint of ``interval``."""

    extend_along_axis: bool = True
    """
    Continue the curve as half-lines of ``Sigma`` outside ``interval``. The endpoints must then
    lie on the x-axis with tangent ``+x``; otherwise the deformation is not compact and the
    curve is rejected.
    """

    axis_tolerance: C.PositiveFloat = 1.0e-8
    """Tolerance for the endpoint checks above."""

    def __post_init__(self):
        lo, hi = self.interval
        if not hi > lo:
            raise ConfigurationError(f"interval must be non-empty, got {self.interval}.")
        if self.origin is not None and not (lo <= self.origin <= hi):
            raise ConfigurationError(f"origin {self.origin} lies outside {self.interval}.")

    @override
    def parameter_interval(self):
        return self.interval

    @override
    def origin_parameter(self):
        if self.origin is not None:
            return self.origin
        return super().origin_parameter()

    @override
    def extends_along_axis(self):
        return self.extend_along_axis

    @override
    def is_straight(self):
        return False

    @override
    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        fn = resolve_curve_map(self.map)
        points = np.asarray(fn(t), dtype=np.float64)
        if points.shape != (t.shape[0], 3):
            raise ConfigurationError(
                f"Curve map returned shape {points.shape}, expected {(t.shape[0], 3)}."
            )
        return points
