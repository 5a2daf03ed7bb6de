"""Exception types raised across the toolkit.

Each numerical failure carries a short machine-readable ``code`` so callers
(and the command-line harness) can map it to an exit status.
"""


class PantographError(Exception):
    code = "ERROR"


class MeshError(PantographError, ValueError):
    code = "MESH"


class BrownianError(PantographError, ValueError):
    code = "BROWNIAN"


class ModelError(PantographError, ValueError):
    code = "MODEL"


class NumericalError(PantographError, ArithmeticError):
    """Base for failures during integration."""


class ImplicitDivergedError(NumericalError):
    code = "IMPLICIT_DIVERGED"


class StepTooLargeError(NumericalError):
    code = "STEP_TOO_LARGE"


class NonFiniteStateError(NumericalError):
    code = "NONFINITE_STATE"


class NoRealRootError(PantographError, ValueError):
    code = "NO_REAL_ROOT"


class FitError(PantographError, ValueError):
    """A log-log fit could not be formed (e.g. all errors are zero)."""

    def __init__(self, message, code="FIT"):
        super().__init__(message)
        self.code = code


class ReferenceCoverageError(PantographError, ValueError):
    code = "REFERENCE_COVERAGE"


class ConfigError(PantographError, ValueError):
    code = "CONFIG"
