from __future__ import annotations

from typing import Optional


class ContagionLabError(Exception):
    exit_code = 3


class ConfigError(ContagionLabError):
    pass


class DomainError(ContagionLabError, ValueError):
    pass


class SchemaError(ContagionLabError):
    pass


class ParseError(ContagionLabError):
    pass


class ValidationError(ContagionLabError):
    "`row` is the 1-based data row of a balance-sheet file, when known."

    def __init__(self, msg: str, row: Optional[int] = None):
        super().__init__(msg)
        self.row = row


class InfeasibleError(ContagionLabError):
    pass


class ConvergenceError(ContagionLabError):
    pass
