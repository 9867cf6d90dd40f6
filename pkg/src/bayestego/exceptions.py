"""Exception hierarchy.

Every error raised by the package derives from :class:`StegoError`, and most
also derive from the closest builtin so callers can catch ``ValueError``.
"""


class StegoError(Exception):
    """Base class for all bayestego errors."""


class PGMParseError(StegoError, ValueError):
    """A byte sequence could not be decoded as a binary PGM."""


class UnsupportedFormat(PGMParseError):
    pass


class UnsupportedMaxval(PGMParseError):
    pass


class TruncatedData(PGMParseError):
    pass


class ZeroDimensions(PGMParseError):
    pass


class MalformedHeader(PGMParseError):
    pass


class ImageTooSmall(StegoError, ValueError):
    pass


class OutOfBounds(StegoError, IndexError):
    pass


class ConfigError(StegoError, ValueError):
    pass


class ShapeError(StegoError, ValueError):
    pass


class DomainError(StegoError, ValueError):
    pass


class FormatError(StegoError, ValueError):
    """A serialized model or key could not be decoded."""


class NumericalError(StegoError, ArithmeticError):
    pass


class FramingError(StegoError, ValueError):
    """Payload framing is inconsistent: wrong key, wrong model, or corruption."""


class CapacityExceeded(StegoError, ValueError):
    pass


class KeyMismatch(StegoError, KeyError):
    """The model does not match the hash recorded in the stego key."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""
