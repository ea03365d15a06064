"""Exception hierarchy shared by every module in the package."""


class CqfiError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(CqfiError, ValueError):
    pass


class NonHermitianInput(CqfiError, ValueError):
    pass


class InvalidState(CqfiError, ValueError):
    """Density matrix or ket violates normalization/positivity."""


class ConvergenceFailure(CqfiError, RuntimeError):
    pass


class NegativeVariance(CqfiError, ValueError):
    pass


class StepTooLarge(CqfiError, ValueError):
    pass


class PositivityLost(CqfiError, RuntimeError):
    pass


class NonTracelessDerivative(CqfiError, ValueError):
    pass


class VanishingOutcomeProbability(CqfiError, ValueError):
    pass


class PopulationFloor(CqfiError, ValueError):
    """Probe has weight on an eigenstate whose population is below the floor."""


class IncompletePovm(CqfiError, ValueError):
    pass


class EmptySample(CqfiError, ValueError):
    pass


class InsufficientSample(CqfiError, ValueError):
    pass


class NormCollapse(CqfiError, RuntimeError):
    pass


class NegativeSample(CqfiError, ValueError):
    pass


class SingularCovariance(CqfiError, ValueError):
    pass


class QuadratureNonConvergence(CqfiError, RuntimeError):
    pass


class ConfigInvalid(CqfiError, ValueError):
    """Raised with the dotted path of the offending config field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalFailure(CqfiError, RuntimeError):
    pass
