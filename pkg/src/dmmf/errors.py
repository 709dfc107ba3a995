"""Exception types shared across the package."""


class DmmfError(Exception):
    """Base class for all package errors."""


class ModelError(DmmfError):
    pass


class OracleError(DmmfError):
    pass


class DerivativeUndefined(DmmfError):
    pass


class SigmaUndefined(DmmfError):
    pass


class RequestError(DmmfError):
    pass


class ContractViolation(DmmfError):
    pass


class BoundInapplicable(DmmfError):
    """Raised when a bound's precondition fails; ``condition`` names the rule."""

    def __init__(self, condition: str):
        super().__init__(condition)
        self.condition = condition


class ConfigError(DmmfError):
    """Invalid experiment configuration. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
