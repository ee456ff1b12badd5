"""Exception hierarchy shared across the package."""


class HamsymError(Exception):
    """Base class for all errors raised by hamsym."""


class ParseError(HamsymError, ValueError):
    """Malformed expression text.  ``offset`` is a byte offset into the input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.message = message
        self.offset = offset


class EvalError(HamsymError, ArithmeticError):
    """Unbound variable or a domain error during evaluation."""


class DomainError(EvalError):
    """State rejected by a singularity guard."""


class ConfigError(HamsymError):
    """Invalid configuration file or catalog reference."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.message = message
        self.line = line


class NumericalError(HamsymError):
    """A numerical procedure failed (integration, Newton iteration)."""


class NewtonError(NumericalError):
    pass


class SingularJacobianError(NewtonError):
    def __init__(self, message: str, cond: float):
        super().__init__(f"{message} (condition estimate {cond:.3g})")
        self.cond = cond
