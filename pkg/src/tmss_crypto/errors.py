"""Exception hierarchy shared by all modules."""


class TmssError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(TmssError, ValueError):
    pass


class UnsupportedConfiguration(TmssError, ValueError):
    pass


class TruncationError(TmssError):
    """The truncated Fock space drops more probability than allowed."""


class CalibrationError(TmssError):
    pass


class ProtocolError(TmssError, RuntimeError):
    """A session step was invoked out of order (a programming error)."""
