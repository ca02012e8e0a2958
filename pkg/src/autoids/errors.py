"""Exception hierarchy; each family maps to a CLI exit code."""


class AutoIdsError(Exception):
    exit_code = 1


class ConfigError(AutoIdsError):
    exit_code = 2


class DataError(AutoIdsError):
    exit_code = 3


class TrainingError(AutoIdsError):
    exit_code = 4


class PersistenceError(AutoIdsError):
    exit_code = 5


class VersionError(PersistenceError):
    pass


class DigestError(PersistenceError):
    pass


class StageError(AutoIdsError):
    """Wraps an error raised inside a pipeline stage, keeping its exit code."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", TrainingError.exit_code)
