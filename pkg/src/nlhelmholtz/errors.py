"""Exception types raised across the package."""


class NLHelmholtzError(Exception):
    """Base class for all package errors."""


class InvalidExponent(NLHelmholtzError, ValueError):
    pass


class GridMismatch(NLHelmholtzError, ValueError):
    pass


class RadiusExceedsBox(NLHelmholtzError, ValueError):
    pass


class InvalidGrid(NLHelmholtzError, ValueError):
    pass


class SingularPoint(NLHelmholtzError, ValueError):
    pass


class ShellUnresolved(NLHelmholtzError, ValueError):
    pass


class InvalidAbsorption(NLHelmholtzError, ValueError):
    pass


class ScheduleTooAggressive(NLHelmholtzError, ValueError):
    pass


class ExpectedRealField(NLHelmholtzError, ValueError):
    pass


class InvalidProblem(NLHelmholtzError, ValueError):
    pass


class NonpositiveQuadraticForm(NLHelmholtzError, ValueError):
    pass


class DegenerateDirection(NLHelmholtzError, ValueError):
    pass


class RecenterUnavailable(NLHelmholtzError, ValueError):
    pass


class NotConverged(NLHelmholtzError, RuntimeError):
    """No run reached the residual tolerance; ``best`` holds the best state seen."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class PartialMultiplicity(NLHelmholtzError, RuntimeError):
    def __init__(self, msg, found=()):
        super().__init__(msg)
        self.found = list(found)


class WindowTooNarrow(NLHelmholtzError, ValueError):
    pass


class BadWindow(NLHelmholtzError, ValueError):
    pass


class BadSpectrum(NLHelmholtzError, ValueError):
    pass


class ZeroInput(NLHelmholtzError, ValueError):
    pass


class EmptyFamily(NLHelmholtzError, ValueError):
    pass


class ChecksumMismatch(NLHelmholtzError, IOError):
    pass


class ScenarioError(NLHelmholtzError, ValueError):
    """Scenario validation failure carrying the full list of problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
