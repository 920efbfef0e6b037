# services/errors.py
from __future__ import annotations


class EcgaError(Exception):
    """
    Base failure carrying the exit code the CLI should return.
    Shaped like HTTPException(status_code, detail): callers raise, main.py maps.
    """
    exit_code: int = 2

    def __init__(self, detail: str, exit_code: int | None = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


class DimensionError(EcgaError, ValueError):
    pass


class ContractError(EcgaError, ValueError):
    pass


class ConfigError(EcgaError):
    pass


class ParseError(EcgaError):
    pass


class MissingFileError(EcgaError):
    pass


class NumericError(EcgaError):
    exit_code = 3


class CheckFailed(EcgaError):
    exit_code = 1
