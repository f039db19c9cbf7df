"""Exception hierarchy shared by every module of the package."""


class LuckockError(Exception):
    """Base class for all errors raised by this package."""


class NonEvaluable(LuckockError):
    """A function family cannot be evaluated on the requested interval."""


class BadInterval(LuckockError):
    """Interval bounds are inverted, empty or outside the parent interval."""


class Degenerate(LuckockError):
    """The model has no nontrivial standard form (both intensities constant)."""


class DomainMismatch(LuckockError):
    """An integration range exceeds the domain of a tabulated function."""


class NearZero(LuckockError):
    """A reciprocal was requested of a function that comes too close to zero."""


class AssumptionViolation(LuckockError):
    """A model assumption required by the requested operation does not hold."""

    def __init__(self, message: str, failed: tuple[str, ...] = ()):
        super().__init__(message)
        self.failed = failed


class GridTooCoarse(LuckockError):
    """Two routes to the same quantity disagree beyond tolerance."""


class IdentityViolation(LuckockError):
    """A closed-form identity failed; this indicates a solver bug."""


class ZeroMarketRate(LuckockError):
    """A tick model has a vanishing market-order rate."""


class ParityError(LuckockError):
    """A tick-grid point was given on the wrong (odd/even) grid."""


class OffGrid(LuckockError):
    """An order-book price does not lie on the tick grid."""


class OutOfRange(LuckockError):
    """An argument lies outside the admissible range."""


class NotInterior(LuckockError):
    """A derived subinterval touches the boundary of the model interval."""


class InsufficientData(LuckockError):
    """Too few observations for a statistical test."""
