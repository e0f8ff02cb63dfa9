class BenchError(Exception):
    pass


class ArgumentError(BenchError, ValueError):
    pass


class DomainError(ArgumentError):
    pass


class UnsupportedDimensionError(ArgumentError):
    pass


class ConfigError(BenchError):
    pass


class ConfigMismatchError(ConfigError):
    def __init__(self, message, diff=None):
        super().__init__(message)
        self.diff = diff or {}


class GPFitError(BenchError):
    """Factorisation impossible même au plafond de nugget."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class DegenerateError(BenchError):
    pass


class ContractError(BenchError):
    pass
