# mmdscape/validation.py
from __future__ import annotations
import math
from typing import Any
from collections.abc import Callable, Collection

# --- Type Aliases ---
ValidationResult = tuple[bool, str]
# A validator gets the value and the entire config dict for context
ValidatorFunc = Callable[[Any | None, dict[str, Any]], ValidationResult]

# ===================================================================
# ERRORS
# ===================================================================

class MmdScapeError(Exception):
    """Base class for every error raised by the library."""

class InvalidArgumentError(MmdScapeError, ValueError):
    """An argument has the wrong shape, sign or range."""

class InvalidModelError(MmdScapeError, ValueError):
    """A model violates its invariants (non-PD covariance, zero target, ...)."""

class InsufficientSampleError(MmdScapeError, ValueError):
    """A sample is too small for the requested statistic."""

class LikelihoodUndefinedError(MmdScapeError):
    """The model has no density, so the likelihood cannot be evaluated."""

class DivergedError(MmdScapeError):
    def __init__(self, step: int, message: str) -> None:
        super().__init__(f"Diverged at step {step}: {message}")
        self.step = step
        self.message = message

    def __reduce__(self) -> tuple[type, tuple]:
        return type(self), (self.step, self.message)

class NotCriticalError(MmdScapeError):
    def __init__(self, grad_norm: float, threshold: float) -> None:
        super().__init__(f"Gradient norm {grad_norm:.3e} exceeds the critical-point threshold {threshold:.1e}.")
        self.grad_norm = grad_norm
        self.threshold = threshold

    def __reduce__(self) -> tuple[type, tuple]:
        return type(self), (self.grad_norm, self.threshold)

class InitError(MmdScapeError):
    """Initialization (VCA) could not find enough independent vertices."""

class UnsupportedError(MmdScapeError):
    """The request is outside the supported enumeration or family set."""

class ConfigError(MmdScapeError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None) -> None:
        location = []
        if field is not None:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")
        self.field = field
        self.line = line
        self.message = message

    def __reduce__(self) -> tuple[type, tuple]:
        return type(self), (self.message, self.field, self.line)

# ===================================================================
# GENERIC VALIDATOR GENERATORS (Our Reusable Building Blocks)
# ===================================================================

def required(message: str = "This value is required.") -> ValidatorFunc:
    """Ensures a value is not None, not an empty string, and not an empty list."""
    def validator(value: Any | None, config: dict[str, Any]) -> ValidationResult:
        if value is None:
            return False, message
        if isinstance(value, str) and not value.strip():
            return False, message
        if isinstance(value, (list, tuple, dict)) and not value:
            return False, message
        return True, ""
    return validator

def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)

def is_positive(message: str) -> ValidatorFunc:
    """Ensures a number (or every number of a list) is finite and > 0."""
    def validator(value: Any | None, config: dict[str, Any]) -> ValidationResult:
        # Missing values are `required`'s job.
        if value is None:
            return True, ""
        values = value if isinstance(value, (list, tuple)) else [value]
        for item in values:
            if not _is_number(item) or not math.isfinite(item) or item <= 0:
                return False, message
        return True, ""
    return validator

def is_non_negative(message: str) -> ValidatorFunc:
    """Ensures a number (or every number of a list) is finite and >= 0."""
    def validator(value: Any | None, config: dict[str, Any]) -> ValidationResult:
        if value is None:
            return True, ""
        values = value if isinstance(value, (list, tuple)) else [value]
        for item in values:
            if not _is_number(item) or not math.isfinite(item) or item < 0:
                return False, message
        return True, ""
    return validator

def is_int_at_least(minimum: int, message: str) -> ValidatorFunc:
    """Ensures an integer (or every integer of a list) is >= minimum."""
    def validator(value: Any | None, config: dict[str, Any]) -> ValidationResult:
        if value is None:
            return True, ""
        values = value if isinstance(value, (list, tuple)) else [value]
        for item in values:
            if isinstance(item, bool) or not isinstance(item, int) or item < minimum:
                return False, message
        return True, ""
    return validator

def is_one_of(choices: Collection[str], message: str) -> ValidatorFunc:
    """Ensures a value is one of the allowed choices."""
    def validator(value: Any | None, config: dict[str, Any]) -> ValidationResult:
        if value is None:
            return True, ""
        if value not in choices:
            return False, message
        return True, ""
    return validator

def is_subset_of(choices: Collection[str], message: str) -> ValidatorFunc:
    """Ensures every entry of a list value is one of the allowed choices."""
    def validator(value: Any | None, config: dict[str, Any]) -> ValidationResult:
        if value is None:
            return True, ""
        if not isinstance(value, (list, tuple)) or any(item not in choices for item in value):
            return False, message
        return True, ""
    return validator

def is_at_least_field(other_field_key: str, message: str) -> ValidatorFunc:
    """
    Validates that a numeric value is not smaller than the value of
    another field in the same config (e.g. dim >= rank).
    """
    def validator(value: Any | None, config: dict[str, Any]) -> ValidationResult:
        other_value = config.get(other_field_key)
        # If either value is missing, another validator will catch it.
        if not _is_number(value) or not _is_number(other_value):
            return True, ""
        if value < other_value:
            return False, message
        return True, ""
    return validator
