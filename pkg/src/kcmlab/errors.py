"""Exception types shared across the package."""


class KcmError(Exception):
    """Base class for all package errors."""


class ShapeError(KcmError, ValueError):
    pass


class ContractError(KcmError, ValueError):
    """A precondition of an operation was violated."""


class FormatError(KcmError, ValueError):
    """A binary or text file does not match its expected layout."""


class ConfigError(KcmError, ValueError):
    pass


class CapacityError(KcmError, ValueError):
    """The requested computation exceeds the supported size."""


class TrainingDivergedError(KcmError, RuntimeError):
    def __init__(self, step, diagnostics):
        self.step = step
        self.diagnostics = diagnostics
        super().__init__(f"non-finite loss at step {step}: {diagnostics}")
