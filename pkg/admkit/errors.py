import math
from typing import Any


class AdmError(Exception):
    pass


class ConfigError(AdmError):
    pass


class NumericalError(AdmError):
    pass


class DomainError(NumericalError, ValueError):
    pass


class SolverError(NumericalError):
    def __init__(self, message: str, effects: Any = None) -> None:
        super().__init__(message)
        self.effects = effects


class IntegrationError(NumericalError):
    pass


class SimulationError(NumericalError):
    def __init__(self, message: str, board_index: int | None = None) -> None:
        prefix = f"board {board_index}: " if board_index is not None else ""
        super().__init__(prefix + message)
        self.board_index = board_index


class CurveRangeError(NumericalError, ValueError):
    pass


def require_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value!r}.")


def require_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value!r}.")
