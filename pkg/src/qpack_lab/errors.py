"""Exception hierarchy. Everything a command reports as a domain failure
derives from :class:`QpackError`."""


class QpackError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class ParseError(QpackError):
    pass


class ValidationError(QpackError, ValueError):
    pass


class MissingPropertyError(QpackError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "property absent"


class ConvergenceError(QpackError):
    pass


class FitError(QpackError):
    pass
