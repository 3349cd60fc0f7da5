"""Exception types raised across the package."""


class EpshapeError(Exception):
    """Base class for all package errors."""


class NotSkew(EpshapeError, ValueError):
    pass


class InvalidRotation(EpshapeError, ValueError):
    pass


class SingularInertia(EpshapeError, ValueError):
    pass


class MissingField(EpshapeError, KeyError):
    """A state lacks a field required by the requested evaluation."""

    def __str__(self):
        return Exception.__str__(self)


class ZeroDesiredVelocity(EpshapeError, ValueError):
    pass


class ArityMismatch(EpshapeError, ValueError):
    pass


class NonFiniteState(EpshapeError, ArithmeticError):
    pass


class NotAnEquilibrium(EpshapeError, ValueError):
    pass


class NoConvergence(EpshapeError, ArithmeticError):
    pass


class ScenarioInvalid(EpshapeError, ValueError):
    """Scenario failed validation; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ParseError(ScenarioInvalid):
    pass


# name used for scenario validation failures
ValidationError = ScenarioInvalid
