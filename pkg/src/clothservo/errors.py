"""Exception types shared across the package."""


class ClothServoError(Exception):
    """Base class for all package errors."""


class ParameterError(ClothServoError, ValueError):
    """A parameter is outside its valid domain."""


class ContractError(ClothServoError, ValueError):
    """Caller violated an operation's preconditions (shape/layout mismatch etc.)."""


class LayoutMismatchError(ContractError):
    """Feature vectors from different layouts were combined."""


class SimulationDivergedError(ClothServoError, RuntimeError):
    """The cloth simulation produced NaNs or unbounded positions."""


class InsufficientDataError(ClothServoError, ValueError):
    """Not enough recorded data to perform the requested sampling."""


class DictionaryLoadError(ClothServoError, RuntimeError):
    """A dictionary file failed to load or validate."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
