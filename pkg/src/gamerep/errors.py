"""Error kinds shared across the package; each maps to a CLI exit code."""


class GamerepError(Exception):
    exit_code = 1
    code = "error"


class ConfigError(GamerepError, ValueError):
    exit_code = 2
    code = "config_error"


class DataError(GamerepError, ValueError):
    exit_code = 3
    code = "data_error"


class NumericError(GamerepError, ArithmeticError):
    exit_code = 4
    code = "numeric_failure"
