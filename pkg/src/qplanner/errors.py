"""Exception types raised across the package."""


class PlannerError(Exception):
    """Base class for all errors raised by qplanner."""


class ActionNotInSpace(PlannerError):
    pass


class EmptyActionSpace(PlannerError):
    pass


class EmptyCandidates(PlannerError):
    pass


class MissingTemplate(PlannerError):
    def __init__(self, kind):
        super().__init__(f"no prompt template for task kind {kind!s}")
        self.kind = kind


class ParseFailure(PlannerError):
    """Executor output could not be turned into a result for the step."""


class ExecutorError(PlannerError):
    pass


class ExecutorTimeout(ExecutorError):
    pass


class ExecutorTransport(ExecutorError):
    pass


class ExecutorMalformed(ExecutorError):
    pass


class EmbeddingTransport(PlannerError):
    pass


class DimensionMismatch(PlannerError):
    pass


class BufferTooSmall(PlannerError):
    pass


class EmptyDataset(PlannerError):
    pass


class LengthMismatch(PlannerError):
    pass


class NotAPermutation(PlannerError):
    pass


class SchemaError(PlannerError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class TooShortContext(SchemaError):
    pass


class ConfigError(PlannerError):
    pass
