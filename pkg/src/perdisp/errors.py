"""Exception and warning types raised by perdisp.

Every numerical fault derives from :class:`NumericalFailure`; the CLI maps
those to exit status 3 and :class:`ConfigError` to exit status 2.
"""


class NumericalFailure(RuntimeError):
    """A computation failed to meet its tolerance."""


class RootPolishFailure(NumericalFailure):
    pass


class BisectionFailure(NumericalFailure):
    pass


class EigenFailure(NumericalFailure):
    pass


class DegenerateDerivative(NumericalFailure):
    pass


class NonPositiveDelta(NumericalFailure):
    pass


class BranchPointEvaluation(NumericalFailure):
    pass


class QuadratureFailure(NumericalFailure):
    pass


class NoSignChange(NumericalFailure):
    pass


class ConeViolation(NumericalFailure):
    """The lattice window is too small to contain the ballistic cone."""


class StepRejected(NumericalFailure):
    pass


class InsufficientData(NumericalFailure):
    pass


class ConfigError(ValueError):
    """Invalid run configuration. ``path`` names the offending field."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class ContinuationWarning(UserWarning):
    """Eigenvector phase continuation lost overlap between grid points."""
