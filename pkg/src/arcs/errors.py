"""Exception types shared across the package."""


class ArcsError(Exception):
    pass


class DomainError(ArcsError, ValueError):
    """Sensitivity evaluated left of its admissible floor."""


class DivergentTail(ArcsError, ValueError):
    """Tail integral of a sensitivity function is infinite."""


class Unsupported(ArcsError, NotImplementedError):
    pass


class BetaInfeasible(ArcsError, ValueError):
    """beta <= n + sqrt(n/2): the admissible delta interval is empty."""


class DenominatorNonpositive(ArcsError, ValueError):
    pass


class NegativeDiscriminant(ArcsError, ArithmeticError):
    pass


class NotFound(ArcsError):
    """Witness search exhausted its box without satisfying the minors."""

    def __init__(self, message, best_margin=None, box=None):
        super().__init__(message)
        self.best_margin = best_margin
        self.box = box


class Infeasible(ArcsError):
    pass


class LinearSolveDiverged(ArcsError, RuntimeError):
    pass


class InsufficientSamples(ArcsError, ValueError):
    pass


class ParseError(ArcsError, ValueError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ValidationError(ArcsError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
