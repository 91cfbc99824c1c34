"""Exception hierarchy shared by all korn_gauge modules."""


class KornGaugeError(Exception):
    """Base class for all library errors."""


class InvalidInput(KornGaugeError, ValueError):
    """Bad arguments: unknown shape, wrong dimension, malformed predicate."""


class InvalidDimension(InvalidInput):
    pass


class MeshError(KornGaugeError):
    """A mesh violates one of the validity invariants."""


class MeshFormatError(InvalidInput):
    """A mesh file could not be parsed.

    ``lineno`` is the 1-based line of the offending input, or None when the
    problem is structural rather than tied to a line.
    """

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class UnsupportedElementError(MeshFormatError):
    pass


class GeometryMismatchError(InvalidInput):
    """Boundary geometry is incompatible with the requested normal mode."""


class PreconditionError(InvalidInput):
    pass


class NumericalFailure(KornGaugeError):
    """A factorization or solve broke down.

    ``condition`` holds a condition-number estimate when one is available.
    """

    def __init__(self, message, condition=None):
        self.condition = condition
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)
