"""Exception types shared across the library.

The CLI maps these onto exit codes: ValidationError (and subclasses) -> 1,
VerificationError -> 2, NumericError -> 3.
"""


class InteractionLabError(Exception):
    """Base class for all library errors."""


class ValidationError(InteractionLabError):
    """Bad inputs: dimension mismatches, out-of-range arguments, malformed specs."""


class DimensionError(ValidationError):
    """Vector/matrix length does not match the declared player count."""


class DomainError(ValidationError):
    """Argument outside its mathematical domain (order, index, fraction)."""


class GuardError(ValidationError):
    """Exact-enumeration path requested beyond its size guard."""


class SchemaError(ValidationError):
    """Config or serialized-file schema violation."""


class VerificationError(InteractionLabError):
    """A verification suite exceeded its residual threshold."""


class NumericError(InteractionLabError):
    """Non-finite value where a finite one is required (diverged training, bad loss)."""
