"""Exception types shared across the package."""


class OkalabError(Exception):
    """Base class for all errors raised by okalab."""


class ParseError(OkalabError):
    """Syntax or scope error in an expression source string."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (offset {position})")
        self.position = position


class EvaluationDomainError(OkalabError):
    """Evaluation left the domain of a sub-expression (log, sqrt, division, power)."""


class NonFiniteError(OkalabError):
    """An intermediate value overflowed to inf or nan; evaluation is aborted."""


class CriticalBoundaryError(OkalabError):
    """The defining function has a (near-)vanishing gradient at a boundary point."""


class SolverConvergenceError(OkalabError):
    """The nearest-point solver exhausted its multistart budget without converging."""


class FocalPointError(OkalabError):
    """A denominator 1 - t*kappa was non-positive: t lies beyond the focal bound."""


class MedialStencilError(OkalabError):
    """A finite-difference stencil touches the medial axis; the result would be invalid."""


class BallNotContainedError(OkalabError):
    """A quadrature ball is not contained in the domain."""


class ConfigError(OkalabError):
    """Invalid command line or configuration input."""
