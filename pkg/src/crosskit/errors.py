"""Exception and warning classes raised by the solvers.

Every error carries the name of the module that raised it so the CLI can
report ``module:kind`` without inspecting tracebacks.
"""


class CrosskitError(Exception):
    module = "crosskit"

    @property
    def kind(self):
        return type(self).__name__


class InvalidPotential(CrosskitError, ValueError):
    module = "greens_core"


class BranchPointError(CrosskitError, ValueError):
    module = "greens_core"


class DegenerateSlope(CrosskitError, ValueError):
    module = "greens_core"


class DomainError(CrosskitError, ValueError):
    module = "greens_core"


class WronskianDegenerate(CrosskitError, ArithmeticError):
    module = "greens_core"


class ConventionError(CrosskitError, ValueError):
    module = "greens_core"


class PoleError(CrosskitError, ArithmeticError):
    """Raised when a dressing denominator vanishes.

    ``stage`` is the 1-based dressing stage for sequential dressing, ``None``
    otherwise.
    """

    module = "two_state"

    def __init__(self, message, stage=None, module=None):
        super().__init__(message)
        self.stage = stage
        if module is not None:
            self.module = module


class ClosedEntranceChannel(CrosskitError, ValueError):
    module = "two_state"


class NonConstantAsymptotics(CrosskitError, ValueError):
    module = "two_state"


class SingularSystem(CrosskitError, ArithmeticError):
    module = "multichannel"


class GridTooCoarse(CrosskitError, ValueError):
    module = "multichannel"


class NonIntegrable(CrosskitError, ArithmeticError):
    module = "continuum"


class QuadratureFailure(CrosskitError, ArithmeticError):
    module = "continuum"


class TailTooHeavy(CrosskitError, ValueError):
    module = "continuum"


class StabilityViolation(CrosskitError, ArithmeticError):
    module = "oracle"


class IllConditioned(UserWarning):
    """Condition number of a dressing system exceeds 1e12."""


class NonMonotone(UserWarning):
    """Width-extrapolation input is not converging monotonically."""


class NoConvergence(UserWarning):
    """Newton refinement of a pole candidate did not converge."""
