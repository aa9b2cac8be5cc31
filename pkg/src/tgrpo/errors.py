"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, RemotePolicyError -> 4.
"""


class TgrpoError(Exception):
    """Base class for all package errors."""


class ConfigError(TgrpoError):
    """Invalid or unknown configuration."""


class DataError(TgrpoError):
    """Malformed or inconsistent input data."""


class ParseError(DataError):
    """A record in an input file could not be parsed."""


class ValidationError(DataError):
    """A parsed record violates a structural invariant."""


class GenerationError(DataError):
    """A synthetic benchmark spec is infeasible."""


class InvalidActionError(TgrpoError):
    """An action was applied to a state where it is not a candidate."""


class IntegrityError(TgrpoError):
    """A stored record failed its replay check."""


class RemotePolicyError(TgrpoError):
    """Base class for remote policy failures."""


class RemoteUnavailableError(RemotePolicyError):
    """Transport to the remote policy failed after all retries."""


class ProtocolError(RemotePolicyError):
    """The remote policy returned a malformed or out-of-range response."""
