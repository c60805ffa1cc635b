from __future__ import annotations

from typing import Any


class LeakyWireError(Exception):
    """Base class for every error raised by leakywire."""


class ConfigurationError(LeakyWireError, ValueError):
    """
    The inputs cannot be turned into a well-posed computation.

    The CLI maps this error (and pydantic validation errors) to exit code 2.
    """


class GeometryError(ConfigurationError):
    """A curve violates one of the geometric hypotheses (degenerate speed, non-compact deformation)."""

    def __init__(self, message: str, *, location: float | None = None):
        super().__init__(message)

        self.location = location
        """Parameter (or arc-length) value where the violation was detected."""


class SelfIntersectionError(GeometryError):
    """The bi-Lipschitz ratio dropped below the configured floor."""

    def __init__(self, message: str, *, pair: tuple[float, float], ratio: float):
        super().__init__(message, location=pair[0])

        self.pair = pair
        """The offending arc-length pair ``(s, s')``."""

        self.ratio = ratio
        """The chord/arc ratio at the offending pair."""


class ContractViolationError(LeakyWireError, ValueError):
    """A caller asked for something the operation is defined to reject, e.g. an excluded block pair."""


class NumericalError(LeakyWireError, ArithmeticError):
    """
    Base class for numerical failures.

    The CLI maps this error to exit code 3.
    """


class SingularityError(NumericalError):
    """A kernel was evaluated on its singular set (``x = 0`` or a point on the curve)."""


class SingularPencilError(NumericalError):
    """
    ``alpha - Q^kappa`` is numerically singular.

    This is not a bug: it signals a bound state at (or very near) this ``kappa``.
    """

    def __init__(self, message: str, *, kappa: float, smallest_singular_value: float):
        super().__init__(message)

        self.kappa = kappa
        self.smallest_singular_value = smallest_singular_value


class QuadratureAccuracyError(NumericalError):
    """Adaptive quadrature did not reach the requested accuracy within the subdivision limit."""

    def __init__(self, message: str, *, estimate: float, error: float):
        super().__init__(message)

        self.estimate = estimate
        """The value the quadrature had reached."""

        self.error = error
        """The quadrature's own error estimate."""


class EigensolverError(NumericalError):
    """An eigenpair failed the residual check."""

    def __init__(self, message: str, *, residuals: Any):
        super().__init__(message)

        self.residuals = residuals


class ExtrapolationError(NumericalError):
    """The ``-Xi ln r + Omega`` fit of near-curve values did not reach its tolerance."""

    def __init__(self, message: str, *, diagnostics: dict[str, Any]):
        super().__init__(message)

        self.diagnostics = diagnostics


class LeakyWireWarning(UserWarning):
    """Base class for warning-level conditions."""


class WraparoundWarning(LeakyWireWarning):
    """A grid function handed to the periodic T-realization does not decay at the interval ends."""


class TubularRadiusWarning(LeakyWireWarning):
    """A shift radius reached the tubular-radius estimate; the shifted curve may meet the curve."""
