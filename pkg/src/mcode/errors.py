"""Exception hierarchy shared by all modules.

Every exception carries a ``category`` used by the CLI to choose an exit code.
"""


class MCODEError(Exception):
    category = "error"
    exit_code = 1


class ArgumentError(MCODEError, ValueError):
    category = "argument"
    exit_code = 2


class ParseError(MCODEError, ValueError):
    category = "parse"
    exit_code = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(MCODEError, ValueError):
    category = "validation"
    exit_code = 3


class NumericError(MCODEError, ArithmeticError):
    category = "numeric"
    exit_code = 4


class ConvergenceError(MCODEError, RuntimeError):
    category = "convergence"
    exit_code = 4

    def __init__(self, message, violation=None):
        self.violation = violation
        super().__init__(message)


class UndefinedMetricError(MCODEError, ValueError):
    category = "undefined-metric"
    exit_code = 5
