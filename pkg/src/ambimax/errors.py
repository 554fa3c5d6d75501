"""Exception hierarchy shared across the package."""


class AmbimaxError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(AmbimaxError):
    """Vector/matrix shapes do not line up (states, assets, priors)."""


class DomainError(AmbimaxError):
    """Invalid parameter, violated precondition, or out-of-range inversion."""


class DivergenceBoundError(AmbimaxError):
    """Divergence budget c is too large for the reference prior.

    The closed-form tilted measures are only guaranteed to be valid
    probability vectors when c < min_s 1/(1 - p0_s); operations that rely
    on those closed forms refuse to run otherwise.
    """


class NegativeProbabilityError(AmbimaxError):
    """A closed-form tilt produced a negative probability.

    This signals a violated precondition upstream; probabilities are never
    clamped silently.
    """


class InadmissibleWealthError(AmbimaxError):
    """Terminal wealth is non-positive under a positive-domain utility."""


class PriceBoundsError(AmbimaxError):
    """Price lies outside the no-arbitrage interval (min payoff, max payoff)."""


class BracketError(AmbimaxError):
    """A root bracket with opposite signs could not be established."""


class ConvergenceError(AmbimaxError):
    """An iterative method exhausted its iteration budget."""
