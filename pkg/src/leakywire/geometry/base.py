from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Annotated, ClassVar

import nshconfig as C
import numpy as np
from typing_extensions import TypeAliasType

from ..registry import curve_registry


class CurveSpecBase(C.Config, ABC):
    """
    A curve ``Gamma: R -> R^3`` given by a family and its parameters.

    Outside ``parameter_interval()`` every curve coincides with the x-axis ``Sigma``
    (for curves that extend along the axis), so a family only needs to describe the
    compact deformation.
    """

    arclength_parameter: ClassVar[bool] = False
    """Whether ``evaluate`` is already parametrized by arc length (unit speed)."""

    deformation_bound: C.PositiveFloat | None = None
    """
    Optional bound ``rho`` on the size of the deformation. When set, the curve is checked to
    stay within distance ``rho`` of the x-axis.
    """

    @abstractmethod
    def parameter_interval(self) -> tuple[float, float]:
        """
        The closed parameter interval carrying the deformation.

        An empty interval ``(t0, t0)`` means that the curve is the straight line.
        """
        ...

    @abstractmethod
    def evaluate(self, t: np.ndarray) -> np.ndarray:
        """Points ``Gamma(t)`` for parameters inside ``parameter_interval()``, shape ``(n, 3)``."""
        ...

    def origin_parameter(self) -> float:
        """The parameter value where arc length is zero. Defaults to the midpoint of the interval."""
        lo, hi = self.parameter_interval()
        return 0.5 * (lo + hi)

    def extends_along_axis(self) -> bool:
        """Whether the curve continues as straight half-lines along ``Sigma`` outside the interval."""
        return True

    def is_straight(self) -> bool:
        lo, hi = self.parameter_interval()
        return hi <= lo

    def finite_difference_step(self) -> float:
        lo, hi = self.parameter_interval()
        return 1.0e-4 * max(hi - lo, 1.0)

    def derivative(self, t: np.ndarray) -> np.ndarray:
        """``dGamma/dt``. The default is a fourth-order central difference."""
        t = np.asarray(t, dtype=np.float64)
        h = self.finite_difference_step()
        return (
            -self.evaluate(t + 2 * h)
            + 8 * self.evaluate(t + h)
            - 8 * self.evaluate(t - h)
            + self.evaluate(t - 2 * h)
        ) / (12 * h)

    def second_derivative(self, t: np.ndarray) -> np.ndarray:
        """``d^2Gamma/dt^2``. The default is a fourth-order central difference."""
        t = np.asarray(t, dtype=np.float64)
        h = self.finite_difference_step()
        return (
            -self.evaluate(t + 2 * h)
            + 16 * self.evaluate(t + h)
            - 30 * self.evaluate(t)
            + 16 * self.evaluate(t - h)
            - self.evaluate(t - 2 * h)
        ) / (12 * h * h)


CurveSpec = TypeAliasType(
    "CurveSpec",
    Annotated[CurveSpecBase, curve_registry.DynamicResolution()],
)
