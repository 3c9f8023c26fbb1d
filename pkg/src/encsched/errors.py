"""Exception types shared across the package.

The CLI maps each class to a stable exit code (see ``encsched.cli``).
"""


class ConfigError(ValueError):
    """Invalid model, channel or problem parameters."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (non-convergence, singular matrix)."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StructureViolation(RuntimeError):
    """A solved policy slice is not of threshold form.

    ``context`` holds enough information to reproduce the counterexample
    (time step, the fixed coordinate and the offending 0/1 slice).
    """

    def __init__(self, message, context=None):
        super().__init__(message)
        self.context = dict(context or {})
