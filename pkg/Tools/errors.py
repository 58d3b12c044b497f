"""Exception hierarchy shared by every FormalCity module."""
from __future__ import annotations

from typing import Any


class FormalCityError(Exception):
    """Base class; ``to_dict`` renders the machine-readable error payload."""

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = {key: value for key, value in details.items() if value is not None}

    def to_dict(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"error": type(self).__name__, "message": self.message}
        payload.update({key: _jsonable(value) for key, value in self.details.items()})
        return payload


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    return str(value)


class DataValidationError(FormalCityError, ValueError):
    """Input that violates a documented schema or domain rule.

    ``line`` is the 1-based CSV line (header is line 1) when the error comes
    from a file.
    """

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None, **details: Any):
        if line is not None:
            message = f"line {line}: {message}"
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message, line=line, path=path, **details)
        self.line = line
        self.path = path


class MissingColumn(DataValidationError):
    pass


class NonNumericValue(DataValidationError):
    pass


class DuplicateKey(DataValidationError):
    pass


class NegativeEmployment(DataValidationError):
    pass


class InvalidValue(DataValidationError):
    pass


class InvalidCode(DataValidationError):
    pass


class MissingPopulation(DataValidationError):
    pass


class UnmappedMunicipality(DataValidationError):
    pass


class NonPositiveWage(DataValidationError):
    pass


class InvalidConfig(DataValidationError):
    """Synthetic generator configuration out of range."""


class ConfigInvalid(DataValidationError):
    """Pipeline configuration file failed validation."""


class ComputationError(FormalCityError, ArithmeticError):
    pass


class DegenerateYear(ComputationError):
    pass


class SingularStructure(ComputationError):
    pass


class EmptyFlows(ComputationError):
    pass


class NonConvergence(ComputationError):
    pass


class RankDeficient(ComputationError):
    pass


class DegenerateResponse(ComputationError):
    pass


class StageFailure(FormalCityError, RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        detail = cause.to_dict() if isinstance(cause, FormalCityError) else {"error": type(cause).__name__, "message": str(cause)}
        super().__init__(f"stage '{stage}' failed: {cause}", stage=stage, cause=detail)
        self.stage = stage
        self.cause = cause


class MissingOutput(FormalCityError, FileNotFoundError):
    pass
