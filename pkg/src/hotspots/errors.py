"""Exception types raised by the hotspots package."""


class HotSpotsError(Exception):
    """Base class for all package errors."""


class PotentialError(HotSpotsError, ValueError):
    """Invalid potential parameters (e.g. lambda below the Hardy threshold)."""


class ConditionVError(PotentialError):
    """A sampled sub-check of the potential contract diverged.

    ``report`` holds the full validation report with witness radii.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ProfileVanishes(HotSpotsError):
    """The harmonic profile crossed zero, so the operator is not nonnegative."""

    def __init__(self, r):
        super().__init__(f"harmonic profile vanishes at r = {r:.6g}")
        self.r = r


class StiffnessFailure(HotSpotsError):
    """Step control underflowed while integrating the profile ODE."""


class AmbiguousClass(HotSpotsError):
    """Two candidate tail models fit the profile about equally well."""

    def __init__(self, message, classification=None):
        super().__init__(message)
        self.classification = classification


class DivergentGamma(HotSpotsError):
    """The outer integral defining Gamma_k(infinity) does not converge."""

    def __init__(self, message, partial_sums=None):
        super().__init__(message)
        self.partial_sums = partial_sums


class TailDivergence(HotSpotsError):
    """The integral defining Lambda is not absolutely convergent."""


class TruncationWarning(UserWarning):
    """Spherical-harmonic truncation leaves a large residual energy."""


class LinearSolveFailure(HotSpotsError):
    """The banded linear solve of an implicit step broke down."""


class DomainEscape(HotSpotsError):
    """Significant mass reached the outer part of the computational domain."""

    def __init__(self, message, fraction=None, t=None):
        super().__init__(message)
        self.fraction = fraction
        self.t = t


class OutOfDomain(HotSpotsError, ValueError):
    """A reconstruction point lies outside the computational domain."""


class UnsupportedRegime(HotSpotsError):
    """No hot-spot prediction is available for this operator class."""


class NoRoot(HotSpotsError):
    """The implicit radius equation could not be bracketed."""

    def __init__(self, message, endpoints=None):
        super().__init__(message)
        self.endpoints = endpoints


class InsufficientSpan(HotSpotsError):
    """Too few records, or too short a time span, for a rate fit."""


class ConfigError(HotSpotsError):
    """A scenario configuration could not be parsed or validated."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
