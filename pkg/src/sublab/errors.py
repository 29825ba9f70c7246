"""Exception hierarchy shared across the package."""


class SublabError(Exception):
    """Base class for all sublab errors."""


class OutOfDomain(SublabError):
    """Coordinates violate a non-periodic axis bound."""


class DegenerateMetric(SublabError):
    """Metric tensor is not symmetric positive definite at a point."""


class LeftDomain(SublabError):
    """An integration step exited the coordinate domain."""


class RankDeficient(SublabError):
    """Projection Jacobian does not have full rank at a point."""


class BasePointMismatch(SublabError):
    """A tangent vector is anchored at the wrong base point."""


class MismatchedBasePoint(SublabError):
    """Bundle tangents compared at different bundle points."""


class NonPositiveWarp(SublabError):
    """Warping function is not strictly positive at a sample."""


class DisconnectedGraph(SublabError):
    """Sampled space has unreachable nodes."""


class EmptyFiberNet(SublabError):
    """A fiber net contributed no points."""


class NotSurjective(SublabError):
    """Correspondence misses points on one side."""


class TooLarge(SublabError):
    """Instance exceeds the exact-solver size cap."""


class UncoveredTarget(SublabError):
    """A target sample is not the image of any source sample."""


class InvalidScenario(SublabError):
    """Unknown or ill-configured scenario."""


class IntegrabilityRequired(SublabError):
    """Operation needs an integrable horizontal distribution."""


class UnsupportedFiberSphere(SublabError):
    """Fiber sphere dimension not covered by the sampler."""
