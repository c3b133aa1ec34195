"""Exception hierarchy shared by services and the command line."""
from typing import Optional


class LabError(Exception):
    """Base class for every error the lab raises on purpose"""

    exit_code = 1
    code = "lab_error"

    def __init__(self, message: str, detail: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail


class ConfigError(LabError):
    exit_code = 2
    code = "config_error"


class ExpressionParseError(ConfigError):
    """Symbol expression could not be parsed; `position` is a 0-based column"""

    code = "parse_error"

    def __init__(self, message: str, expression: str, position: int):
        super().__init__(f"{message} at position {position}", detail=expression)
        self.expression = expression
        self.position = position


class BudgetExceededError(LabError):
    exit_code = 3
    code = "budget_exceeded"


class MissingArtifactError(LabError):
    exit_code = 4
    code = "missing_artifact"


class GridError(LabError, ValueError):
    code = "grid_error"


class FieldError(LabError, ValueError):
    code = "field_error"


class SymbolError(LabError, ValueError):
    code = "symbol_error"


class HomogeneityError(SymbolError):
    code = "not_homogeneous"


class SupportError(LabError, ValueError):
    code = "support_error"


class NyquistError(LabError, ValueError):
    code = "nyquist_error"


class WeightError(LabError, ValueError):
    code = "weight_error"


class HypothesisError(LabError, ValueError):
    code = "hypothesis_violated"
