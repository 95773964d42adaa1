"""Exception hierarchy shared by every module of the package."""


class PositronError(Exception):
    """Base class for all errors raised by deep_positron."""


class InvalidFormat(PositronError, ValueError):
    """A FormatSpec with out-of-range parameters."""


class UnknownFormatTag(InvalidFormat):
    """A format tag string that does not parse (e.g. ``posit8x1``)."""


class NotRepresentable(PositronError, ValueError):
    """A decoded value whose fields do not fit the target format."""


class LengthMismatch(PositronError, ValueError):
    pass


class DimensionMismatch(PositronError, ValueError):
    pass


class NaRInput(PositronError, ValueError):
    """A posit NaR reached an operation that only accepts real values."""


class ReservedInput(PositronError, ValueError):
    """A float code with the all-ones exponent field (NaN/Inf slot)."""


class FormatMismatch(PositronError, ValueError):
    """Codes, models or requests disagree about the number format."""


class QuireOverflow(PositronError, OverflowError):
    """The accumulator left the range its declared width can hold."""


class SchemaError(PositronError, ValueError):
    pass


class ConfigError(PositronError, ValueError):
    pass


class NonFiniteLoss(PositronError, ArithmeticError):
    pass
