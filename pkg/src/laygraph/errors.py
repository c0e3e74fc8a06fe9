"""Exception types shared across the toolkit."""


class LaygraphError(Exception):
    """Base class for all toolkit errors."""


class ParseError(LaygraphError):
    """Raised when an annotation file cannot be decoded."""


class ValidationError(LaygraphError):
    """Raised when decoded data violates a structural invariant."""


class ParameterError(LaygraphError):
    """Raised when a caller-supplied parameter is out of range."""


class FormatError(LaygraphError):
    """Raised when a binary payload does not match its declared format."""


class AlignmentError(LaygraphError):
    """Raised when two inputs that must agree on size or identity do not."""


class DataError(LaygraphError):
    """Raised when payload values are unusable (e.g. non-finite floats)."""


class ContractError(LaygraphError):
    """Raised when an internal precondition between modules is broken."""
