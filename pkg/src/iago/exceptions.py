"""Exception types raised across the package."""


class IagoError(Exception):
    """Base class for all errors raised by :mod:`iago`."""


class InvalidSpecificationError(IagoError, ValueError):
    """A covariance or noise specification has an invalid parameter."""


class InvalidArgumentError(IagoError, ValueError):
    """An argument is outside of its documented domain."""


class InsufficientDataError(IagoError, ValueError):
    """Not enough observations to carry out the requested operation."""


class ConditioningError(IagoError, ArithmeticError):
    """A matrix factorization failed even after the largest allowed jitter.

    Attributes
    ----------
    jitter : float
        The last (largest) jitter value that was tried.
    """

    def __init__(self, message, jitter):
        super().__init__(f"{message} (jitter={jitter:.3g})")
        self.jitter = jitter
