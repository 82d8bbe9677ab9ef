# -*- coding: utf-8 -*-
"""Error types raised by the ROM controller toolchain."""
from typing import Any, Optional


class RomControlError(Exception):
    """Base class for all toolchain errors."""


class DimensionError(RomControlError, ValueError):
    """Array shapes do not agree."""


class DomainError(RomControlError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class StabilityError(RomControlError, ValueError):
    """A stability precondition does not hold."""


class SynthesisError(RomControlError, ValueError):
    """Controller or model synthesis failed."""


class DegenerateInputError(RomControlError, ValueError):
    """Input data carries no usable information."""


class ConditioningError(RomControlError, ValueError):
    """A matrix is too ill-conditioned to continue."""


class ConsistencyError(RomControlError, ValueError):
    """Separate inputs disagree with each other."""


class UnsupportedSystemError(RomControlError, ValueError):
    """The system class is outside what the pipeline handles."""


class ParseError(RomControlError, ValueError):
    """Malformed input file."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DivergenceError(RomControlError, ArithmeticError):
    """A simulation produced non-finite values."""

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} (step {step})")


class PipelineError(RomControlError, ValueError):
    """A pipeline phase could not produce an accepted artifact."""

    def __init__(self, message: str, trace: Any = None):
        self.trace = trace
        super().__init__(message)
