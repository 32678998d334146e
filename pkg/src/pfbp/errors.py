"""Exception types shared across the package."""


class PfbpError(Exception):
    """Base class for all package-specific errors."""


class LoadError(PfbpError):
    """A dataset file could not be read."""


class FormatError(LoadError):
    """The file is structurally malformed (bad header, unparsable cell)."""


class MissingValueError(LoadError):
    """The data contain NaN or infinite cells."""


class NonBinaryTargetError(LoadError):
    """The designated target column is not a 0/1 variable."""


class ConfigError(PfbpError):
    """A run configuration is invalid (unknown key, bad value)."""
