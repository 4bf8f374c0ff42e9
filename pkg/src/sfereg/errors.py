class SferegError(Exception):
    """
    Base class for every error the toolkit raises on purpose.

    The CLI turns these into a logged message and the process exit code.
    """

    exit_code: int = 1


class ShapeError(SferegError, ValueError):
    exit_code = 2


class UsageError(SferegError, RuntimeError):
    exit_code = 2


class ConfigError(SferegError):
    exit_code = 2


class MissingArtifactError(SferegError):
    exit_code = 3


class NumericalError(SferegError):
    exit_code = 4
