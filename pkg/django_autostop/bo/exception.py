class AutoStopError(Exception):
    pass


class InvalidArgument(AutoStopError, ValueError):
    pass


class OutOfBounds(InvalidArgument):
    def __init__(self, dim: str, value: float, lower: float, upper: float):
        self.dim = dim
        super().__init__(f"Value {value!r} of dimension '{dim}' is out of bounds [{lower!r}, {upper!r}]")


class LengthMismatch(InvalidArgument):
    pass


class DimensionMismatch(InvalidArgument):
    pass


class FactorizationFailure(AutoStopError):
    pass


class NegativeVariance(InvalidArgument):
    pass


class BadFoldCount(InvalidArgument):
    pass


class BadTimes(InvalidArgument):
    pass


class MissingInput(AutoStopError):
    def __init__(self, kind: str, field: str):
        self.kind = kind
        self.field = field
        super().__init__(f"Criterion '{kind}' requires input '{field}'")


class NotAvailable(AutoStopError):
    pass


class ConfigError(AutoStopError, ValueError):
    pass


class RecordFormatError(AutoStopError, ValueError):
    pass


class ObjectiveError(AutoStopError):
    pass


class SubprocessError(ObjectiveError):
    def __init__(self, returncode: int, stderr: str):
        self.returncode = returncode
        self.stderr = stderr
        super().__init__(f"Objective process exited with code {returncode}: {stderr[-500:]}")


class ReplayMismatch(ObjectiveError):
    pass


class RunAborted(AutoStopError):
    """
    Прерывание прогона с сохранением частичной записи.
    """

    def __init__(self, message: str, record=None):
        self.record = record
        super().__init__(message)


class ObjectiveFailure(RunAborted):
    def __init__(self, iteration: int, cause: Exception, record=None):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"Objective failed at iteration {iteration}: {cause}", record=record)


class ReplayExhausted(RunAborted):
    pass
