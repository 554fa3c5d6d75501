"""Core domain objects: state spaces, priors, utilities, ambiguity parameters, agents.

All types are immutable value objects (frozen dataclasses over read-only
arrays), safe to share between threads.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    DomainError,
    InadmissibleWealthError,
    PriceBoundsError,
)

#: Open-domain guard for positive-wealth utilities.  Using a small positive
#: floor instead of zero keeps root-finders out of the singular region.
POSITIVE_WEALTH_FLOOR = 1e-12

_PROB_SUM_TOL = 1e-12

UTILITY_KINDS = ("power", "log", "exponential", "quadratic_quasilinear")


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Distribution:
    """Probability vector over states: entries >= 0, summing to one."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _readonly(self.probs)
        if probs.ndim != 1 or probs.size == 0:
            raise DomainError("probability vector must be 1-D and non-empty")
        if not np.all(np.isfinite(probs)):
            raise DomainError("probabilities must be finite")
        if np.any(probs < 0.0):
            s = int(np.argmin(probs))
            raise DomainError(f"negative probability {probs[s]!r} at state index {s}")
        total = float(probs.sum())
        if abs(total - 1.0) > _PROB_SUM_TOL:
            raise DomainError(f"probabilities sum to {total!r}, not 1 (tol {_PROB_SUM_TOL})")
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return int(self.probs.size)

    def divergence(self, prior: "ReferencePrior") -> float:
        """Quadratic divergence sum_s p_s^2 / p0_s relative to `prior`."""
        return float(np.sum(self.probs**2 / prior.probs))


@dataclass(frozen=True)
class ReferencePrior:
    """Reference distribution with strictly positive entries.

    Strict positivity keeps the quadratic divergence finite and makes every
    tilted measure equivalent to the prior.
    """

    dist: Distribution

    def __post_init__(self):
        if isinstance(self.dist, (list, tuple, np.ndarray)):
            object.__setattr__(self, "dist", Distribution(self.dist))
        if np.any(self.dist.probs <= 0.0):
            s = int(np.argmin(self.dist.probs))
            raise DomainError(f"reference prior must be strictly positive; state index {s} is not")

    @property
    def probs(self) -> np.ndarray:
        return self.dist.probs

    def __len__(self) -> int:
        return len(self.dist)


@dataclass(frozen=True)
class AmbiguitySpec:
    """Divergence budget c >= 1 and worst-case weight alpha in [0, 1].

    Derived quantities:
      d          = c - 1, the squared radius of the divergence ball;
      delta      = sqrt(d) * (2*alpha - 1), the signed ambiguity tilt
                   (positive for averse, negative for seekers, zero for
                   neutral agents);
      d_reduced  = d * (1 - 2*alpha)^2, the shrunken budget under which a
                   seeker's problem becomes a pure best-case problem.
    """

    c: float
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c >= 1.0):
            raise DomainError(f"divergence budget c must be >= 1, got {self.c!r}")
        if not (math.isfinite(self.alpha) and 0.0 <= self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha!r}")

    @property
    def d(self) -> float:
        return self.c - 1.0

    @property
    def delta(self) -> float:
        return math.sqrt(self.d) * (2.0 * self.alpha - 1.0)

    @property
    def d_reduced(self) -> float:
        return self.d * (1.0 - 2.0 * self.alpha) ** 2

    @property
    def is_seeker(self) -> bool:
        return self.alpha < 0.5


@dataclass(frozen=True)
class UtilitySpec:
    """Felicity function specification.

    Kinds: ``power(gamma)`` and ``log`` live on positive wealth and satisfy
    the Inada conditions; ``exponential(gamma)`` lives on the whole real
    line; ``quadratic_quasilinear(gamma)`` is the time-additive form
    u(x, s) = x - (1/(2 gamma)) (1 - gamma s)^2, linear in the cash leg x,
    and is exempted from the strict-concavity-in-wealth check.
    """

    kind: str
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in UTILITY_KINDS:
            raise DomainError(f"unknown utility kind {self.kind!r}; expected one of {UTILITY_KINDS}")
        if self.kind == "log":
            if self.gamma is not None:
                raise DomainError("log utility takes no gamma parameter")
        else:
            if self.gamma is None or not (math.isfinite(self.gamma) and self.gamma > 0.0):
                raise DomainError(f"{self.kind} utility requires gamma > 0, got {self.gamma!r}")
        self._self_check()

    @property
    def positive_domain(self) -> bool:
        return self.kind in ("power", "log")

    @property
    def satisfies_inada(self) -> bool:
        return self.kind in ("power", "log", "exponential")

    @property
    def state_dependent(self) -> bool:
        return self.kind == "quadratic_quasilinear"

    def value(self, w):
        """u(w) for wealth-only kinds; rejects the state-dependent kind."""
        w = np.asarray(w, dtype=float)
        if self.kind == "power":
            g = self.gamma
            if g == 1.0:
                return np.log(w)
            return w ** (1.0 - g) / (1.0 - g)
        if self.kind == "log":
            return np.log(w)
        if self.kind == "exponential":
            return -np.exp(-self.gamma * w)
        raise DomainError("quadratic_quasilinear felicity is state-dependent; no pure wealth value")

    def marginal(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "power":
            return w ** (-self.gamma)
        if self.kind == "log":
            return 1.0 / w
        if self.kind == "exponential":
            return self.gamma * np.exp(-self.gamma * w)
        raise DomainError("quadratic_quasilinear felicity is state-dependent; no pure wealth marginal")

    def curvature(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "power":
            return -self.gamma * w ** (-self.gamma - 1.0)
        if self.kind == "log":
            return -1.0 / w**2
        if self.kind == "exponential":
            return -self.gamma**2 * np.exp(-self.gamma * w)
        raise DomainError("quadratic_quasilinear felicity is state-dependent; no pure wealth curvature")

    def inverse(self, y: float) -> float:
        """u^{-1}(y), with explicit range checks per kind."""
        if self.kind == "power":
            g = self.gamma
            if g == 1.0:
                return math.exp(y)
            if g > 1.0 and y >= 0.0:
                raise DomainError(f"power(gamma={g}) utility values are negative; cannot invert {y!r}")
            if g < 1.0 and y <= 0.0:
                raise DomainError(f"power(gamma={g}) utility values are positive; cannot invert {y!r}")
            return ((1.0 - g) * y) ** (1.0 / (1.0 - g))
        if self.kind == "log":
            return math.exp(y)
        if self.kind == "exponential":
            if y >= 0.0:
                raise DomainError(f"exponential utility values are negative; cannot invert {y!r}")
            return -math.log(-y) / self.gamma
        # quadratic quasi-linear: invert along the certainty line (linear in x)
        return y + 1.0 / (2.0 * self.gamma)

    def certainty_value(self, w: float) -> float:
        """Felicity of holding sure wealth w with no terminal exposure."""
        if self.kind == "quadratic_quasilinear":
            return w - 1.0 / (2.0 * self.gamma)
        return float(self.value(w))

    def relative_risk_aversion(self, w):
        w = np.asarray(w, dtype=float)
        return -self.curvature(w) * w / self.marginal(w)

    def _self_check(self):
        # numeric sanity on a sample grid: u' > 0 and u'' < 0 on the domain
        if self.kind == "quadratic_quasilinear":
            return  # linear in the cash leg; documented exemption
        grid = np.linspace(0.1, 10.0, 7) if self.positive_domain else np.linspace(-5.0, 5.0, 7)
        if np.any(self.marginal(grid) <= 0.0) or np.any(self.curvature(grid) >= 0.0):
            raise DomainError(f"{self.kind} utility failed the increasing/concave sanity check")


@dataclass(frozen=True)
class Scenario:
    """Market primitive: state labels, asset payoff matrix, asset prices.

    ``payoffs`` has one row per asset (K x n).  Rows must be linearly
    independent including the constant direction, which rules out degenerate
    (riskless-replicating) assets.
    """

    states: tuple
    payoffs: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        payoffs = np.array(self.payoffs, dtype=float)
        if payoffs.ndim == 1:
            payoffs = payoffs.reshape(1, -1)
        if payoffs.ndim != 2:
            raise DimensionMismatchError("payoffs must be a K x n matrix")
        prices = _readonly(np.atleast_1d(np.asarray(self.prices, dtype=float)))
        n = len(states)
        if n < 2:
            raise DomainError(f"need at least two states, got {n}")
        if payoffs.shape[1] != n:
            raise DimensionMismatchError(
                f"payoff matrix has {payoffs.shape[1]} columns but there are {n} states"
            )
        if prices.shape != (payoffs.shape[0],):
            raise DimensionMismatchError(
                f"{payoffs.shape[0]} assets but {prices.shape[0]} prices"
            )
        if not (np.all(np.isfinite(payoffs)) and np.all(np.isfinite(prices))):
            raise DomainError("payoffs and prices must be finite")
        augmented = np.vstack([payoffs, np.ones(n)])
        if np.linalg.matrix_rank(augmented, tol=1e-10) != payoffs.shape[0] + 1:
            raise DomainError(
                "payoff rows must be linearly independent (including the constant direction)"
            )
        payoffs.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "payoffs", payoffs)
        object.__setattr__(self, "prices", prices)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_assets(self) -> int:
        return int(self.payoffs.shape[0])

    def single_payoffs(self) -> np.ndarray:
        if self.n_assets != 1:
            raise DomainError(f"operation requires a single asset, scenario has {self.n_assets}")
        return self.payoffs[0]

    @property
    def price(self) -> float:
        if self.n_assets != 1:
            raise DomainError(f"operation requires a single asset, scenario has {self.n_assets}")
        return float(self.prices[0])

    @property
    def payoff_floor(self) -> float:
        return float(np.min(self.single_payoffs()))

    @property
    def payoff_ceiling(self) -> float:
        return float(np.max(self.single_payoffs()))

    def with_price(self, price: float) -> "Scenario":
        """Copy of this single-asset scenario quoted at a different price."""
        if self.n_assets != 1:
            raise DomainError("with_price is defined for single-asset scenarios only")
        return Scenario(self.states, self.payoffs, np.array([float(price)]))

    def require_interior_price(self, price: Optional[float] = None) -> float:
        """Validate that the price sits strictly inside (min payoff, max payoff)."""
        pi = self.price if price is None else float(price)
        lo, hi = self.payoff_floor, self.payoff_ceiling
        if not (lo < pi < hi):
            raise PriceBoundsError(f"price {pi!r} outside the no-arbitrage interval ({lo}, {hi})")
        return pi


@dataclass(frozen=True)
class Agent:
    """An investor: utility, initial wealth, reference prior, ambiguity attitude.

    ``endowment`` is an optional per-state random endowment added to terminal
    wealth; ``None`` means zero.
    """

    utility: UtilitySpec
    w0: float
    prior: ReferencePrior
    ambiguity: AmbiguitySpec
    endowment: Optional[np.ndarray] = None

    def __post_init__(self):
        if not math.isfinite(self.w0):
            raise DomainError("initial wealth must be finite")
        if self.utility.positive_domain and self.w0 <= 0.0:
            raise DomainError("positive-domain utilities require initial wealth > 0")
        if self.endowment is not None:
            endow = _readonly(np.atleast_1d(np.asarray(self.endowment, dtype=float)))
            if endow.shape != (len(self.prior),):
                raise DimensionMismatchError(
                    f"endowment has {endow.shape[0]} entries but the prior has {len(self.prior)}"
                )
            object.__setattr__(self, "endowment", endow)

    @property
    def delta(self) -> float:
        return self.ambiguity.delta

    @property
    def has_endowment(self) -> bool:
        return self.endowment is not None and bool(np.any(self.endowment != 0.0))

    def endowment_vector(self, n: int) -> np.ndarray:
        if self.endowment is None:
            return np.zeros(n)
        return self.endowment

    def with_alpha(self, alpha: float) -> "Agent":
        return dataclasses.replace(self, ambiguity=AmbiguitySpec(self.ambiguity.c, alpha))

    def with_ambiguity(self, c: float, alpha: float) -> "Agent":
        return dataclasses.replace(self, ambiguity=AmbiguitySpec(c, alpha))


@dataclass(frozen=True)
class WealthProfile:
    """Terminal wealth per state for a given position, with admissibility flag."""

    wealth: np.ndarray
    admissible: bool

    def __post_init__(self):
        object.__setattr__(self, "wealth", _readonly(self.wealth))


class DivergenceCheck(NamedTuple):
    ok: bool
    bound: float
    margin: float


def check_divergence_bound(prior: ReferencePrior, ambiguity: AmbiguitySpec) -> DivergenceCheck:
    """Check c < min_s 1/(1 - p0_s) and report the margin.

    A positive margin certifies that both closed-form tilted measures are
    strictly positive for every wealth profile.
    """
    p0 = prior.probs
    bound = float(np.min(1.0 / (1.0 - p0))) if np.all(p0 < 1.0) else math.inf
    margin = bound - ambiguity.c
    return DivergenceCheck(ok=margin > 0.0, bound=bound, margin=margin)


def require_divergence_bound(prior: ReferencePrior, ambiguity: AmbiguitySpec) -> None:
    from .errors import DivergenceBoundError

    check = check_divergence_bound(prior, ambiguity)
    if not check.ok:
        raise DivergenceBoundError(
            f"divergence budget c={ambiguity.c!r} is not below the prior's bound "
            f"{check.bound!r} (margin {check.margin!r}); closed forms are invalid"
        )


def _theta_vector(theta, n_assets: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.shape != (n_assets,):
        raise DimensionMismatchError(f"position has shape {arr.shape}, expected ({n_assets},)")
    return arr


def wealth_profile(agent: Agent, scenario: Scenario, theta) -> WealthProfile:
    """Terminal wealth W_s = w0 + theta . (S_s - pi) + endowment_s per state."""
    n = scenario.n_states
    if len(agent.prior) != n:
        raise DimensionMismatchError(
            f"agent prior has {len(agent.prior)} states, scenario has {n}"
        )
    th = _theta_vector(theta, scenario.n_assets)
    wealth = agent.w0 + th @ (scenario.payoffs - scenario.prices[:, None])
    wealth = wealth + agent.endowment_vector(n)
    admissible = True
    if agent.utility.positive_domain:
        admissible = bool(np.all(wealth > POSITIVE_WEALTH_FLOOR))
    return WealthProfile(wealth=wealth, admissible=admissible)


def require_admissible(agent: Agent, scenario: Scenario, theta) -> WealthProfile:
    profile = wealth_profile(agent, scenario, theta)
    if not profile.admissible:
        s = int(np.argmin(profile.wealth))
        raise InadmissibleWealthError(
            f"wealth {profile.wealth[s]!r} in state {scenario.states[s]!r} at position {theta!r} "
            "is not positive"
        )
    return profile


def admissible_bounds(agent: Agent, scenario: Scenario, price: Optional[float] = None):
    """Position bounds for a single asset: the whole line for full-domain
    utilities, the positive-wealth box otherwise.

    Requires a strictly interior price and zero endowment.
    """
    if agent.has_endowment:
        raise DomainError("admissible_bounds assumes zero endowment")
    pi = scenario.require_interior_price(price)
    if not agent.utility.positive_domain:
        return (-math.inf, math.inf)
    lo = -agent.w0 / (scenario.payoff_ceiling - pi)
    hi = agent.w0 / (pi - scenario.payoff_floor)
    return (lo, hi)


def endowed_admissible_bounds(agent: Agent, scenario: Scenario, price: Optional[float] = None):
    """Per-state positive-wealth bounds when a random endowment is present."""
    pi = scenario.require_interior_price(price)
    if not agent.utility.positive_domain:
        return (-math.inf, math.inf)
    payoff = scenario.single_payoffs()
    endow = agent.endowment_vector(scenario.n_states)
    lo, hi = -math.inf, math.inf
    for s in range(scenario.n_states):
        excess = payoff[s] - pi
        cash = agent.w0 + endow[s]
        if excess > 0:
            lo = max(lo, -cash / excess)
        elif excess < 0:
            hi = min(hi, cash / -excess)
        elif cash <= 0:
            raise InadmissibleWealthError(
                f"state {scenario.states[s]!r} has non-positive wealth at every position"
            )
    if lo >= hi:
        raise InadmissibleWealthError("no position yields positive wealth in every state")
    return (lo, hi)
