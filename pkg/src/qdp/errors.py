"""Exception hierarchy shared by every subpackage."""


class QdpError(Exception):
    """Base class for all package errors."""


class ModelContractError(QdpError, ValueError):
    """A model returned something that is not a valid kernel, reward or pmf."""


class UnsupportedModelError(QdpError, NotImplementedError):
    """The model lacks a capability (e.g. mu-partials) required by an operation."""


class NumericalDomainError(QdpError, ArithmeticError):
    """A computation left its numerical domain (non-finite values, boundary policy)."""


class PolicyDomainError(QdpError, ValueError):
    """A policy operation is undefined for the given policy (e.g. boundary update)."""


class ResourceGuardError(QdpError, MemoryError):
    """A size guard refused an enumeration that would be too large."""

    def __init__(self, what, size, bound):
        self.what = what
        self.size = size
        self.bound = bound
        super().__init__(f"{what}: size {size:.6g} exceeds guard {bound:.6g}")


class ConfigError(QdpError, ValueError):
    """Invalid configuration file or parameter set."""

    def __init__(self, message, keys=()):
        self.keys = tuple(keys)
        if self.keys:
            message = f"{message}: {', '.join(map(str, self.keys))}"
        super().__init__(message)


class TrainingAborted(QdpError, ArithmeticError):
    """Training hit a non-finite objective; ``trace`` holds the records so far."""

    def __init__(self, message, trace):
        self.trace = trace
        super().__init__(message)
