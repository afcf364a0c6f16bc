"""Exception hierarchy shared by all subsystems."""


class DeployIdError(Exception):
    """Base class for all package errors."""


class ValidationError(DeployIdError):
    """An input value violates a declared precondition or bound."""


class DomainError(DeployIdError):
    """A mathematically ill-posed request (empty stack, singular tensor, ...)."""


class NotFoundError(DeployIdError):
    """A referenced label or artifact does not exist."""


class StateError(DeployIdError):
    """An operation was called in a state that does not admit it."""


class DivergenceError(DeployIdError):
    """A numerical integration produced non-finite values."""


class OptimizationError(DeployIdError):
    """An iterative optimizer failed to make progress."""
