"""Exception types shared across the package."""


class StagHmcError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(StagHmcError, ValueError):
    """Bad user input: config files, CLI arguments, malformed data files."""


class DomainError(StagHmcError, ValueError):
    """Mathematically invalid argument, e.g. gamma = 0 where 1/gamma is needed."""


class NonFiniteError(StagHmcError, ArithmeticError):
    """An energy, gradient, or state component became NaN or infinite.

    Carries enough context to locate the failure; the sampler turns this
    into a rejected proposal rather than a crash.
    """

    def __init__(self, what: str, indices=None):
        self.what = what
        self.indices = indices
        detail = f" at indices {indices}" if indices is not None else ""
        super().__init__(f"non-finite {what}{detail}")
