"""
Exception hierarchy for pcfgnn.
"""


class PcfError(Exception):
    """Base class for all pcfgnn errors."""


class ConfigError(PcfError):
    """A config file or config value could not be used."""


class ParseError(PcfError):
    """A line of an event log is malformed."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"{message} at line {line_no}")
        self.line_no = line_no


class ContractError(PcfError, ValueError):
    """A precondition of an operation was violated."""


class FormatError(PcfError):
    """A binary artifact is corrupt, truncated or of an unsupported version."""


class TrainingDivergedError(PcfError):
    """Loss, gradients or parameters stopped being finite."""


class MetricError(PcfError, ValueError):
    """A metric is undefined for the given input."""


class StageError(PcfError):
    """A pipeline stage failed; wraps the underlying error with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
