"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration errors exit 2,
resource exhaustion exits 3; everything else propagates.
"""


class DomainError(ValueError):
    """A time, index, or parameter lies outside its admissible domain."""


class ConfigurationError(ValueError):
    """A spec object (control grid, problem file, dictionary) is malformed."""


class ExpressionError(ConfigurationError):
    """A problem-file expression failed to parse or validate."""

    def __init__(self, message, position=None, field=None):
        self.position = position
        self.field = field
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if position is not None:
            where.append(f"column {position}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class IntegrationError(RuntimeError):
    """Dynamics produced non-finite values or violated a growth guard."""


class ResourceError(RuntimeError):
    """A tree or scan would exceed the configured node budget."""

    def __init__(self, message, required=None, budget=None):
        self.required = required
        self.budget = budget
        super().__init__(message)
