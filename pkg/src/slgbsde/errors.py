"""Exception hierarchy shared by all modules."""


class BSDELabError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(BSDELabError):
    """A problem definition is inconsistent or produced a non-finite value."""

    def __init__(self, message, function=None, point=None):
        super().__init__(message)
        self.function = function
        self.point = point


class SimulationError(BSDELabError):
    """Euler scheme produced a non-finite state."""

    def __init__(self, message, step=None, path=None):
        super().__init__(message)
        self.step = step
        self.path = path


class DimensionalityError(BSDELabError):
    """Requested convolution quadrature is too large to evaluate."""


class CertificationError(BSDELabError):
    """Non-finite generator value met while certifying mollifier properties."""


class SolverError(BSDELabError):
    """Regression or backward induction failed."""


class StepFailure(SolverError):
    """Picard iteration did not contract at one time step."""

    def __init__(self, message, step, residuals):
        super().__init__(message)
        self.step = step
        self.residuals = list(residuals)


class ConfigError(BSDELabError):
    """Malformed or incomplete scenario configuration."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
