"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside the domain where the quantity is defined."""


class InsufficientData(ValueError):
    """Too few samples or points for the requested statistic."""


class ExtentError(ValueError):
    """A tabulated function does not reach far enough for the request."""


class ValidationError(ValueError):
    """A record or table does not follow the expected schema."""


class UnsupportedError(NotImplementedError):
    """The request is well defined but deliberately not implemented."""


class EmbeddingError(RuntimeError):
    """Circulant embedding produced a significantly negative eigenvalue."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class SimulationDiverged(RuntimeError):
    """A time-stepped field became non-finite."""

    def __init__(self, step, message=None):
        super().__init__(message or f"non-finite field values at step {step}")
        self.step = step
