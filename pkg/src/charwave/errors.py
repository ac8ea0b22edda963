"""Exception hierarchy shared by all charwave modules."""


class CharwaveError(Exception):
    """Base class; `exit_code` is what the CLI returns when it escapes."""

    exit_code = 1


class ConfigInvalid(CharwaveError):
    exit_code = 2


class RejectedA1(ConfigInvalid):
    """Coefficient not bounded away from zero, or V / V' unbounded."""


class RejectedA2(ConfigInvalid):
    """Breakpoints accumulate (gap below the configured floor)."""


class OutOfRange(CharwaveError):
    pass


class MisalignedGrid(CharwaveError):
    pass


class NotAHomeomorphism(ConfigInvalid):
    pass


class ContractionViolated(CharwaveError):
    pass


class NoConvergence(CharwaveError):
    exit_code = 4


class IncompatibleTrace(CharwaveError):
    pass


class IncompatibleData(ConfigInvalid):
    pass


class DecreasingNonlinearity(CharwaveError):
    """Forward solve refused: a decreasing boundary law is ill-posed."""

    exit_code = 3


class QuadratureFailure(CharwaveError):
    pass


class ResonanceViolated(ConfigInvalid):
    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals


class EvenK(CharwaveError):
    pass


class DegenerateFloquet(CharwaveError):
    pass


class EvenHarmonicPresent(CharwaveError):
    pass


class NewtonDiverged(NoConvergence):
    def __init__(self, msg, residual=float("nan")):
        super().__init__(msg)
        self.residual = residual


class TrivialSolution(NoConvergence):
    pass
