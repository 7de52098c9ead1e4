"""Exception types raised across the package."""


class KernelDomainError(ValueError):
    """A time or position lies outside a kernel's admissible domain."""


class NotPSDError(ValueError):
    """A matrix expected to be positive semi-definite has a negative eigenvalue."""

    def __init__(self, message, eigenvalue):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class NumericalError(RuntimeError):
    """A numerical routine failed (e.g. SVD non-convergence)."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, message, details=()):
        super().__init__(message)
        self.details = list(details) or [message]
