"""Exception hierarchy shared by every module."""


class RfmlError(Exception):
    """Base class for all errors raised by rfmlsim."""


class InvalidInputError(RfmlError, ValueError):
    """An argument violates an operation's precondition."""


class DegenerateInputError(InvalidInputError):
    """Input is well-formed but numerically degenerate (e.g. all zeros)."""


class ConfigError(RfmlError, ValueError):
    """Unknown key or invalid value in a run configuration."""


class FileFormatError(RfmlError):
    """Base class for persistence failures."""


class CorruptFileError(FileFormatError):
    """File is truncated or its structure cannot be parsed."""


class VersionMismatchError(FileFormatError):
    """File carries a recognised family magic but an unsupported version."""


class ShapeMismatchError(FileFormatError):
    """Stored tensors disagree with the stored or expected configuration."""
