"""Exception types shared across the package."""


class BoltzlabError(Exception):
    """Base class for all package errors."""


class NegativeLocation(BoltzlabError):
    """Atom location below zero."""


class NegativeWeight(BoltzlabError):
    """Atom weight below zero."""


class EmptyMeasure(BoltzlabError):
    """Measure with no atoms after normalization."""


class MassOutOfTolerance(BoltzlabError):
    """Total mass violates the probability constraint."""


class AtomOverflow(BoltzlabError):
    """A pairwise operation would exceed the hard atom cap."""


class POutOfRange(BoltzlabError):
    """Quantile level outside [0, 1]."""


class InfiniteSeminorm(BoltzlabError):
    """Seminorm requested for measures with unequal mass or mean."""


class LpFailure(BoltzlabError):
    """Linear-program solver returned a degenerate state."""


class InvalidInitial(BoltzlabError):
    """Fixed-point iteration started outside the unit-mean set."""


class StepOutOfRange(BoltzlabError):
    """Time step outside the admissible range for the scheme."""


class WindowTooShort(BoltzlabError):
    """Not enough usable points to fit a decay rate."""


class ScenarioError(BoltzlabError):
    """Scenario file rejected; `path` locates the offending key."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ScenarioSyntaxError(ScenarioError):
    """Scenario text is not well-formed."""


class UnknownKey(ScenarioError):
    """Unexpected or duplicated key in a scenario."""


class RangeError(ScenarioError):
    """Scenario value outside its documented range."""


class ModelInvalid(ScenarioError):
    """Collision model failed validation."""
