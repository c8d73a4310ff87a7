from typing import Optional


class MPFilterError(Exception):
    """Base class for all mpfilter errors."""

    def __init__(self, message: str) -> None:
        self.message = message
        super().__init__(message)


class ConfigurationError(MPFilterError):
    """Raised when model parameters or run settings are invalid."""


class DomainError(MPFilterError):
    """Raised when a model function receives a non-finite state."""


class RangeError(MPFilterError):
    """Raised when a time lies outside the unit interval of a path."""


class ContractError(MPFilterError):
    """Raised when caller-supplied arrays break a documented precondition."""


class DatasetParseError(MPFilterError):
    """Raised when a dataset file cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DatasetValidationError(MPFilterError):
    """Raised when event times are not strictly increasing or leave (0, T]."""


class NumericAbortError(MPFilterError):
    """Base class for errors that abort a Monte Carlo run."""


class NumericOverflowError(NumericAbortError):
    """Raised when an Euler recursion produces a non-finite state."""

    def __init__(self, message: str, step: int) -> None:
        self.step = step
        super().__init__(f"{message} (step {step})")


class SingularityError(NumericAbortError):
    """Raised at a singular point: zero diffusion or an event at zero intensity."""


class DegenerateWeightsError(NumericAbortError):
    """Raised when every particle weight is zero."""

    def __init__(self, message: str, unit_time: Optional[int] = None) -> None:
        self.unit_time = unit_time
        if unit_time is not None:
            message = f"{message} (unit time {unit_time})"
        super().__init__(message)


class UnderResolvedReferenceError(NumericAbortError):
    """Raised when a reference value is noisier than the requested tolerance."""
