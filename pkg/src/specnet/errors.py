"""Exception hierarchy shared across the pipeline stages."""


class SpecnetError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SpecnetError):
    """Inconsistent user-supplied data (mismatched cutoffs, bad config files)."""


class DegenerateCurveError(SpecnetError):
    """The spectral curve is degenerate (identically vanishing discriminant)."""


class ContinuationError(SpecnetError):
    """Analytic continuation of sheets failed or was ambiguous."""


class GeometryError(SpecnetError):
    """A geometric construction (loop, neighborhood, cut) could not be carried out."""


class TamenessError(SpecnetError):
    """The curve collection violates a tameness requirement."""


class QuadratureError(SpecnetError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class TracingError(SpecnetError):
    """The trajectory tracer stalled; a partial curve may be attached."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class SetupError(SpecnetError):
    """Initial scattering data fails its local consistency requirement."""


class UnsupportedTurningPointError(SpecnetError):
    """Turning point is not a simple double branch."""


class PrecisionError(SpecnetError):
    """Numerical integration could not meet the accuracy target."""
