"""Certainty equivalents and the risk/uncertainty compensation split.

Total compensation makes the agent indifferent between the position and
sure wealth under her full preference; risk compensation does the same
under plain expected utility; their difference is the compensation
attributable to ambiguity alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ambiguity import mean_std, state_utilities, value_alpha, value_of_utilities
from .errors import BracketError, DomainError
from .scenario import (
    POSITIVE_WEALTH_FLOOR,
    Agent,
    Scenario,
    require_divergence_bound,
)

_IDENTITY_TOL = 1e-10
_CE_WIDTH_TOL = 1e-14


@dataclass(frozen=True)
class PremiumDecomposition:
    """rho = total compensation, epsilon = risk part, delta_comp = rho - epsilon.

    The ambiguity part carries the sign of the tilt: positive for averse
    agents, zero for neutral ones, negative for seekers.
    """

    rho: float
    epsilon: float
    delta_comp: float


def _payoff_leg(agent: Agent, scenario: Scenario, theta) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if th.shape != (scenario.n_assets,):
        raise DomainError(f"position shape {th.shape} does not match {scenario.n_assets} assets")
    return th @ scenario.payoffs


def _buyer_utilities(agent: Agent, scenario: Scenario, payoff_leg: np.ndarray, nu: float):
    """Per-state felicity of w0 + theta . S - nu, or None when inadmissible."""
    if agent.utility.state_dependent:
        gamma = agent.utility.gamma
        return (agent.w0 - nu) - (1.0 - gamma * payoff_leg) ** 2 / (2.0 * gamma)
    wealth = agent.w0 + payoff_leg - nu
    if agent.utility.positive_domain and np.any(wealth <= POSITIVE_WEALTH_FLOOR):
        return None
    return np.asarray(agent.utility.value(wealth))


def certainty_equivalent(agent: Agent, scenario: Scenario, theta) -> float:
    """Payment nu making the agent indifferent to buying theta units outright.

    Solves V(w0 + theta . S - nu) = u(w0) by bisection in nu; the value is
    strictly decreasing in the wealth shift.  Raises when no admissible nu
    exists (positive-domain utility exhausted).
    """
    require_divergence_bound(agent.prior, agent.ambiguity)
    leg = _payoff_leg(agent, scenario, theta)
    target = agent.utility.certainty_value(agent.w0)
    delta = agent.ambiguity.delta
    probs = agent.prior.probs

    def gap(nu: float) -> Optional[float]:
        u = _buyer_utilities(agent, scenario, leg, nu)
        if u is None:
            return None
        return value_of_utilities(delta, probs, u) - target

    scale = abs(agent.w0) if agent.w0 != 0.0 else 1.0
    lo = -10.0 * scale
    if agent.utility.positive_domain:
        # stay strictly inside the wealth domain so the endpoint is evaluable
        hi = agent.w0 + float(np.min(leg)) - 1e-9 * scale
    else:
        hi = 10.0 * scale
    g_lo = gap(lo)
    for _ in range(4):
        if g_lo is not None and g_lo > 0.0:
            break
        lo *= 2.0
        g_lo = gap(lo)
    else:
        raise BracketError("no lower bracket for the certainty equivalent")
    g_hi = gap(hi)
    widenings = 0
    while g_hi is not None and g_hi > 0.0:
        if agent.utility.positive_domain:
            raise DomainError("no admissible payment: the utility domain is exhausted first")
        hi *= 2.0
        g_hi = gap(hi)
        widenings += 1
        if widenings > 4 and hi > 1e6 * scale:
            raise BracketError("no upper bracket for the certainty equivalent")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi or (hi - lo) < _CE_WIDTH_TOL * max(1.0, abs(mid)):
            break
        g_mid = gap(mid)
        if g_mid is None or g_mid < 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def certainty_equivalent_exponential(agent: Agent, scenario: Scenario, theta) -> float:
    """Closed form for exponential utility:
    nu = -(1/gamma) log(E0[exp(-gamma theta . S)] + delta * S0[exp(-gamma theta . S)]).
    """
    if agent.utility.kind != "exponential":
        raise DomainError("closed-form certainty equivalent requires exponential utility")
    require_divergence_bound(agent.prior, agent.ambiguity)
    gamma = agent.utility.gamma
    leg = _payoff_leg(agent, scenario, theta)
    x = np.exp(-gamma * leg)
    mean, std = mean_std(agent.prior.probs, x)
    return -math.log(mean + agent.ambiguity.delta * std) / gamma


def ambiguity_premium_exponential(agent: Agent, scenario: Scenario, theta) -> float:
    """Closed-form ambiguity compensation for exponential utility:
    (1/gamma) log(1 + delta * S0[exp(-gamma theta . S)] / E0[exp(-gamma theta . S)]).
    """
    if agent.utility.kind != "exponential":
        raise DomainError("the closed-form premium requires exponential utility")
    require_divergence_bound(agent.prior, agent.ambiguity)
    gamma = agent.utility.gamma
    leg = _payoff_leg(agent, scenario, theta)
    x = np.exp(-gamma * leg)
    mean, std = mean_std(agent.prior.probs, x)
    return math.log(1.0 + agent.ambiguity.delta * std / mean) / gamma


def decompose_premium(agent: Agent, scenario: Scenario, theta,
                      price: Optional[float] = None) -> PremiumDecomposition:
    """Split the certain-wealth compensation for holding theta at the given price.

    rho solves u(w0 - rho) = V(theta), epsilon solves u(w0 - epsilon) =
    E0[u(W)]; both use the closed-form utility inverse.  The defining
    identities are re-verified to 1e-10 before returning.
    """
    if price is not None:
        scenario = scenario.with_price(price)
    require_divergence_bound(agent.prior, agent.ambiguity)
    u = state_utilities(agent, scenario, theta)
    probs = agent.prior.probs
    value = value_of_utilities(agent.ambiguity.delta, probs, u)
    eu = float(probs @ u)
    if agent.utility.state_dependent:
        # certainty line is linear in the cash leg
        offset = 1.0 / (2.0 * agent.utility.gamma)
        rho = agent.w0 - (value + offset)
        epsilon = agent.w0 - (eu + offset)
    else:
        rho = agent.w0 - agent.utility.inverse(value)
        epsilon = agent.w0 - agent.utility.inverse(eu)
    check_rho = abs(agent.utility.certainty_value(agent.w0 - rho) - value)
    check_eps = abs(agent.utility.certainty_value(agent.w0 - epsilon) - eu)
    if max(check_rho, check_eps) > _IDENTITY_TOL * max(1.0, abs(value), abs(eu)):
        raise DomainError(
            f"compensation identities failed to verify: residuals {check_rho!r}, {check_eps!r}"
        )
    return PremiumDecomposition(rho=rho, epsilon=epsilon, delta_comp=rho - epsilon)
