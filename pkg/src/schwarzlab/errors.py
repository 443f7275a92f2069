"""Exception hierarchy."""


class SchwarzlabError(Exception):
    """Base class for all errors raised by the package."""


class AmbientDomainError(SchwarzlabError, ValueError):
    """Point outside the exterior region r > 2m, or on the polar axis."""


class HorizonViolation(AmbientDomainError):
    """A surface touches or crosses the horizon r = 2m."""


class StarShapeLost(SchwarzlabError):
    """A displaced surface can no longer be written as a radial graph."""


class ConvexityViolation(SchwarzlabError):
    """A strictly convex surface was required."""


class MeanCurvatureDegenerate(SchwarzlabError, ZeroDivisionError):
    """Mean curvature too close to zero to divide by."""


class SolverFailure(SchwarzlabError):
    """The linearized isometry system is rank deficient beyond its expected kernel."""


class DriftUncorrectable(SchwarzlabError):
    """Gauss-Newton metric correction stalled."""
