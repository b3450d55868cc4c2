"""Exception types shared by all modules. The CLI maps them to exit codes."""


class ValidationError(ValueError):
    """Input violates a documented invariant or precondition."""


class FormatError(ValueError):
    """A file could not be parsed or is truncated."""


class NumericalError(RuntimeError):
    """A numerical routine failed (rank deficiency, solver failure)."""
