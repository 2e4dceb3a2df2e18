"""Exception hierarchy shared by all modules."""


class NakaqueueError(Exception):
    """Base class for every error raised by this package."""


class ParameterDomainError(NakaqueueError, ValueError):
    """An input lies outside the domain of the requested computation."""


class NotPositiveRecurrent(NakaqueueError):
    """The adversarial lead chain has no stationary distribution.

    Raised when the honest fraction is too small for the fork rate, in which
    case the adversary's lead drifts to infinity and every confirmation depth
    is eventually overtaken.
    """


class ThresholdUnreachable(NakaqueueError):
    """No fork rate meets the requested safety threshold at this depth."""


class PmfOverflowError(NakaqueueError):
    """A distribution would need more support points than the hard cap."""


class Unstable(NakaqueueError):
    """Transaction arrival rate is at or above the queue's service capacity."""


class TruncationFailure(NakaqueueError):
    """Level truncation hit its cap before the tail mass fell below tolerance."""


class SelfishDominates(NakaqueueError):
    """Under the queue-service attack no honest block survives in the long run."""
