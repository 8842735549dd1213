"""Exception hierarchy shared by every otkit module."""


class OTError(Exception):
    """Base class for all otkit failures."""


class DimensionError(OTError, ValueError):
    """Array shapes do not agree."""


class DomainError(OTError, ValueError):
    """Input lies outside the domain of an operation (negative mass, ...)."""


class ParameterError(OTError, ValueError):
    """A scalar parameter is out of range."""


class DivergenceUndefinedError(DomainError):
    """KL divergence requested without absolute continuity."""


class DegenerateInputError(OTError, ValueError):
    """Input has no mass to work with."""


class NumericOverflowError(OTError, ArithmeticError):
    """A quantity left the float64 range even after stabilisation."""


class InvariantError(OTError, AssertionError):
    """An internal guarantee failed; this is a bug, not a user error."""


class CapabilityError(OTError, ValueError):
    """Request exceeds what the component is built for."""


class FormatError(OTError, ValueError):
    """A file does not match its declared binary or text format."""
