"""
Error hierarchy shared by the library and the command-line surface.

Every error carries a stable ``error_code`` and the process exit code the CLI
maps it to.
"""

import math
from typing import Any, Dict, Optional


class MixedAdcError(Exception):
    """Base class for all domain errors."""

    error_code: str = "MIXEDADC_ERROR"
    exit_code: int = 1

    def __init__(self, detail: str, **context: Any) -> None:
        super().__init__(detail)
        self.detail = detail
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        """Render the error the way it is logged and reported."""
        return {
            "detail": self.detail,
            "error_code": self.error_code,
            "success": False,
            **self.context,
        }


class ConfigError(MixedAdcError, ValueError):
    """Invalid configuration or violated call contract."""

    error_code = "CONFIG_ERROR"
    exit_code = 2

    def __init__(
        self, detail: str, line: Optional[int] = None, **context: Any
    ) -> None:
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(detail, **context)
        self.line = line


class DimensionError(ConfigError):
    """Array shapes that do not agree."""

    error_code = "DIMENSION_ERROR"


class NumericalError(MixedAdcError, ArithmeticError):
    """Non-finite or otherwise unusable intermediate values."""

    error_code = "NUMERICAL_ERROR"
    exit_code = 3


class NonConvergenceError(MixedAdcError):
    """
    An iterative computation stopped before meeting its tolerance.

    ``value`` is the result at the best iterate, for callers that keep it
    and only count the failure.
    """

    error_code = "NON_CONVERGENCE"
    exit_code = 4

    def __init__(self, detail: str, value: float = math.nan, **context: Any) -> None:
        super().__init__(detail, value=value, **context)
        self.value = value
