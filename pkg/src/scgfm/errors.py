"""Exception types raised across the package."""


class ScgfmError(Exception):
    """Base class for all package errors."""


class ParseError(ScgfmError, ValueError):
    """Malformed input file or record."""


class IntegrityError(ScgfmError, ValueError):
    """Input violates a structural invariant (self-loops, bad shapes, bad marginals)."""


class EmptyGraphError(ScgfmError, ValueError):
    pass


class UnsupportedInstanceError(ScgfmError, ValueError):
    """Instance lies outside what a solver supports (e.g. the brute-force oracle)."""


class NumericalError(ScgfmError, ArithmeticError):
    """Non-finite values appeared during a numerical routine."""


class CheckpointError(ScgfmError):
    pass


class UndefinedCorrelationError(ScgfmError, ValueError):
    """Correlation requested for a constant sequence."""


class InsufficientClassError(ScgfmError, ValueError):
    """Too few classes or class members to build an episode."""
