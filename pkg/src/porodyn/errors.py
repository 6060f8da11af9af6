"""Exception hierarchy shared by all porodyn modules."""


class PorodynError(Exception):
    """Base class for every error raised by porodyn."""


class DomainError(PorodynError, ValueError):
    """Argument lies outside (or numerically on the boundary of) the interval I."""


class RangeError(PorodynError, ValueError):
    """Value outside the range a routine can represent."""


class ConfigError(PorodynError, ValueError):
    pass


class BCError(PorodynError, ValueError):
    """Operation not available for the grid's boundary condition."""


class SizeError(PorodynError, ValueError):
    pass


class SupportError(PorodynError, ValueError):
    """Test function support touches the boundary of its admissible region."""


class ModelError(PorodynError, ValueError):
    pass


class NoConvergence(PorodynError, RuntimeError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class PicardDivergence(PorodynError, RuntimeError):
    pass


class ParseError(PorodynError, ValueError):
    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


class ValidationError(PorodynError, ValueError):
    """Carries every violation found, not just the first one."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
