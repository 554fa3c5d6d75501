"""Demand machinery for ambiguity seekers (alpha < 1/2).

Alternating maximization over measure and position, two-sided local optima,
the binomial closed form through sign-dependent measures, and a probe for
the demand discontinuity at the prior-expected price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .ambiguity import (
    CONSTANT_STD_TOL,
    centered_residuals,
    mean_std,
    state_utilities,
    value_alpha,
)
from .demand import (
    FOC_RESIDUAL_TOL,
    THETA_REL_TOL,
    bisect_decreasing,
    derivative,
    reservation_interval,
    solve_demand,
)
from .errors import BracketError, ConvergenceError, DomainError
from .scenario import (
    Agent,
    Distribution,
    Scenario,
    admissible_bounds,
    require_divergence_bound,
)

_EDGE_BOUND = 1e-9
PRESCAN_POINTS = 129


class TraceStep(NamedTuple):
    iteration: int
    theta: float
    value: float
    measure: tuple


@dataclass(frozen=True)
class AlternatingResult:
    theta: float
    measure: Distribution
    value: float
    trace: tuple
    converged: bool
    iterations: int


@dataclass(frozen=True)
class LocalOptimum:
    theta: float
    value: float
    foc_residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class SeekerDemand:
    """Per-side local optima and the side achieving the larger value.

    ``global_side`` is "both" when the two values tie to 1e-12; downstream
    equilibrium code needs the pair, so ties are never broken silently.
    """

    local_long: Optional[LocalOptimum]
    local_short: Optional[LocalOptimum]
    global_side: str
    iterations: dict
    converged: bool


def _optimist_measure(prior_probs: np.ndarray, sqrt_d: float, utilities: np.ndarray) -> np.ndarray:
    _, std, resid = centered_residuals(prior_probs, utilities)
    if sqrt_d == 0.0 or std <= CONSTANT_STD_TOL:
        return prior_probs.copy()
    return prior_probs * (1.0 + sqrt_d * resid / std)


def _expected_utility_argmax(agent: Agent, scenario: Scenario, probs: np.ndarray,
                             side: Optional[str]) -> float:
    """Argmax of expected utility under a fixed measure, optionally side-restricted.

    Shares the bisection kernel with the demand module; the problem is the
    standard strictly concave one, differentiable everywhere.
    """
    payoff = scenario.single_payoffs()
    pi = scenario.price

    def foc(theta: float) -> float:
        from .scenario import require_admissible

        if agent.utility.state_dependent:
            gamma = agent.utility.gamma
            du = (payoff - pi) - gamma * theta * payoff**2
        else:
            w = require_admissible(agent, scenario, theta).wealth
            du = np.asarray(agent.utility.marginal(w)) * (payoff - pi)
        val = float(probs @ du)
        return val

    bounds = admissible_bounds(agent, scenario)
    if math.isfinite(bounds[0]):
        lo = bounds[0] * (1.0 - _EDGE_BOUND)
        hi = bounds[1] * (1.0 - _EDGE_BOUND)
    else:
        lo, hi = -1.0, 1.0
        for _ in range(80):
            val = foc(lo)
            if not math.isnan(val) and val > 0.0:
                break
            lo *= 2.0
        else:
            raise BracketError("expected-utility bracket expansion failed (lower)")
        for _ in range(80):
            val = foc(hi)
            if math.isnan(val) or val < 0.0:
                break
            hi *= 2.0
        else:
            raise BracketError("expected-utility bracket expansion failed (upper)")
    if side == "long":
        if foc(0.0) <= 0.0:
            return 0.0
        lo = 0.0
    elif side == "short":
        if foc(0.0) >= 0.0:
            return 0.0
        hi = 0.0
    width_tol = THETA_REL_TOL * (hi - lo)
    theta, _ = bisect_decreasing(foc, lo, hi, width_tol=width_tol)
    return theta


def alternating_maximization(agent: Agent, scenario: Scenario, price: float,
                             theta0: float, *, epsilon: float = 1e-10,
                             max_iter: int = 10_000,
                             side: Optional[str] = None) -> AlternatingResult:
    """Alternate best-case measure updates with expected-utility position solves.

    Works on the reduced budget d * (1 - 2 alpha)^2, under which the seeker
    problem is a pure best-case problem; the recorded value trace uses the
    agent's own preference and is nondecreasing by construction.
    """
    if agent.ambiguity.alpha >= 0.5:
        raise DomainError("alternating maximization applies to seekers (alpha < 1/2)")
    if theta0 == 0.0:
        raise DomainError("start away from the kink at zero")
    scenario = scenario.with_price(price)
    scenario.require_interior_price()
    require_divergence_bound(agent.prior, agent.ambiguity)
    sqrt_dr = math.sqrt(agent.ambiguity.d_reduced)
    p0 = agent.prior.probs

    theta = float(theta0)
    trace = [TraceStep(0, theta, value_alpha(agent, scenario, theta))]
    measure = p0.copy()
    converged = False
    for i in range(1, max_iter + 1):
        u = state_utilities(agent, scenario, theta)
        measure = _optimist_measure(p0, sqrt_dr, u)
        theta_next = _expected_utility_argmax(agent, scenario, measure, side)
        trace.append(TraceStep(i, theta_next, value_alpha(agent, scenario, theta_next)))
        if abs(theta_next - theta) <= epsilon:
            theta = theta_next
            converged = True
            break
        theta = theta_next
    if not converged:
        raise ConvergenceError(f"no convergence within {max_iter} iterations")
    return AlternatingResult(
        theta=theta,
        measure=Distribution(measure),
        value=trace[-1].value,
        trace=tuple(trace),
        converged=True,
        iterations=len(trace) - 1,
    )


def _default_start(agent: Agent, scenario: Scenario) -> float:
    bounds = admissible_bounds(agent, scenario)
    if all(map(math.isfinite, bounds)):
        return min(0.1 * (bounds[1] - bounds[0]) / 2.0, 0.5)
    return 0.5


def _prescan_start(agent: Agent, scenario: Scenario, side: str) -> float:
    """Coarse per-side value scan to seed the best basin (n > 2 safeguard)."""
    bounds = admissible_bounds(agent, scenario)
    limit = bounds[1] if side == "long" else -bounds[0]
    if not math.isfinite(limit):
        limit = 64.0
    mags = np.geomspace(limit * 1e-6, limit * (1.0 - _EDGE_BOUND), PRESCAN_POINTS)
    thetas = mags if side == "long" else -mags
    best_theta, best_val = None, -math.inf
    for t in thetas:
        try:
            v = value_alpha(agent, scenario, t)
        except Exception:
            continue
        if v > best_val:
            best_theta, best_val = float(t), v
    if best_theta is None:
        raise DomainError(f"no admissible position found on the {side} side")
    return best_theta


def _run_side(agent: Agent, scenario: Scenario, price: float, side: str) -> Optional[LocalOptimum]:
    start = _default_start(agent, scenario.with_price(price))
    if scenario.n_states > 2:
        start = _prescan_start(agent, scenario.with_price(price), side)
    else:
        start = start if side == "long" else -start
    result = alternating_maximization(agent, scenario, price, start, side=side)
    if abs(result.theta) <= 1e-12:
        return None
    residual = abs(derivative(agent, scenario.with_price(price), result.theta))
    return LocalOptimum(
        theta=result.theta,
        value=result.value,
        foc_residual=residual,
        iterations=result.iterations,
        converged=result.converged,
    )


def _closed_form_side(agent: Agent, scenario: Scenario, price: float, side: str) -> Optional[LocalOptimum]:
    """Binomial side solve as an expected-utility problem under a fixed measure."""
    sc = scenario.with_price(price)
    payoff = sc.single_payoffs()
    good = int(np.argmax(payoff))
    bad = 1 - good
    p_good = float(agent.prior.probs[good])
    delta = agent.ambiguity.delta
    spread = math.sqrt(p_good * (1.0 - p_good))
    tilt = delta * spread
    probs = np.empty(2)
    if side == "long":
        probs[good], probs[bad] = p_good - tilt, 1.0 - p_good + tilt
    else:
        probs[good], probs[bad] = p_good + tilt, 1.0 - p_good - tilt
    theta = _expected_utility_argmax(agent, sc, probs, side)
    if abs(theta) <= 1e-12:
        return None
    residual = abs(derivative(agent, sc, theta))
    return LocalOptimum(theta=theta, value=value_alpha(agent, sc, theta),
                        foc_residual=residual, iterations=1, converged=True)


def binomial_sign_measures(agent: Agent, scenario: Scenario):
    """(long-side, short-side) measures governing a two-state value function.

    On each sign of the position the preference is plain expected utility
    under a fixed tilt of the prior; the long measure prices the asset at
    the upper reservation bound, the short measure at the lower one.
    """
    payoff = scenario.single_payoffs()
    if scenario.n_states != 2:
        raise DomainError("sign-dependent measures require a two-state scenario")
    good = int(np.argmax(payoff))
    bad = 1 - good
    p_good = float(agent.prior.probs[good])
    tilt = agent.ambiguity.delta * math.sqrt(p_good * (1.0 - p_good))
    long_m = np.empty(2)
    short_m = np.empty(2)
    long_m[good], long_m[bad] = p_good - tilt, 1.0 - p_good + tilt
    short_m[good], short_m[bad] = p_good + tilt, 1.0 - p_good - tilt
    return Distribution(long_m), Distribution(short_m)


def _assemble(local_long, local_short, iterations) -> SeekerDemand:
    if local_long is not None and local_short is not None:
        gap = local_long.value - local_short.value
        if abs(gap) <= 1e-12:
            side = "both"
        else:
            side = "long" if gap > 0.0 else "short"
    elif local_long is not None:
        side = "long"
    elif local_short is not None:
        side = "short"
    else:
        side = "zero"
    converged = all(opt.converged for opt in (local_long, local_short) if opt is not None)
    return SeekerDemand(
        local_long=local_long,
        local_short=local_short,
        global_side=side,
        iterations=iterations,
        converged=converged,
    )


def seeker_demand(agent: Agent, scenario: Scenario, price: float, *,
                  method: str = "auto") -> SeekerDemand:
    """Local optima of a seeker at the given price.

    Prices at or above the upper reservation bound admit no long optimum;
    prices at or below the lower bound admit no short optimum; in between
    both sides carry a strictly nonzero local optimum.
    """
    if agent.ambiguity.alpha >= 0.5:
        raise DomainError("seeker_demand requires alpha < 1/2")
    sc = scenario.with_price(price)
    sc.require_interior_price()
    require_divergence_bound(agent.prior, agent.ambiguity)
    band = reservation_interval(agent, sc)
    want_long = price < band.eta_high
    want_short = price > band.eta_low
    use_closed = method == "closed" or (method == "auto" and scenario.n_states == 2)
    if method not in ("auto", "closed", "alternating"):
        raise DomainError(f"unknown method {method!r}")
    if use_closed and scenario.n_states != 2:
        raise DomainError("closed-form side solves require a two-state scenario")

    iterations = {}
    local_long = local_short = None
    if want_long:
        local_long = (_closed_form_side(agent, scenario, price, "long") if use_closed
                      else _run_side(agent, scenario, price, "long"))
        iterations["long"] = local_long.iterations if local_long else 0
    if want_short:
        local_short = (_closed_form_side(agent, scenario, price, "short") if use_closed
                       else _run_side(agent, scenario, price, "short"))
        iterations["short"] = local_short.iterations if local_short else 0
    return _assemble(local_long, local_short, iterations)


def binomial_seeker_demand(agent: Agent, scenario: Scenario, price: float) -> SeekerDemand:
    """Exact two-state demand through the sign-dependent measures.

    The long (short) side is an ordinary expected-utility problem under the
    long (short) measure; a long optimum exists iff the price is below the
    upper reservation bound, a short one iff it is above the lower bound.
    Agrees with the alternating algorithm to solver precision.
    """
    if scenario.n_states != 2:
        raise DomainError("binomial_seeker_demand requires exactly two states")
    if agent.ambiguity.alpha > 0.5:
        raise DomainError("binomial_seeker_demand covers alpha <= 1/2")
    return seeker_demand(agent, scenario, price, method="closed") if agent.ambiguity.alpha < 0.5 \
        else _neutral_binomial(agent, scenario, price)


def _neutral_binomial(agent: Agent, scenario: Scenario, price: float) -> SeekerDemand:
    # neutral boundary case: both sign measures collapse to the prior
    result = solve_demand(agent, scenario, price)
    opt = None
    if result.side != "zero":
        opt = LocalOptimum(result.theta_star, result.value, result.foc_residual, 1, True)
    return SeekerDemand(
        local_long=opt if result.side == "long" else None,
        local_short=opt if result.side == "short" else None,
        global_side=result.side,
        iterations={},
        converged=True,
    )


class DiscontinuityProbe(NamedTuple):
    theta_below: float
    theta_above: float
    jump: float
    price_step: float
    crossing_price: float


def _global_theta(agent: Agent, scenario: Scenario, price: float) -> float:
    if agent.ambiguity.alpha < 0.5:
        res = seeker_demand(agent, scenario, price)
        if res.global_side == "long":
            return res.local_long.theta
        if res.global_side == "short":
            return res.local_short.theta
        if res.global_side == "both":
            # knife-edge tie; report the long branch
            return res.local_long.theta
        return 0.0
    return solve_demand(agent, scenario, price).theta_star


def _side_value_gap(agent: Agent, scenario: Scenario, price: float) -> float:
    res = seeker_demand(agent, scenario, price)
    v_long = res.local_long.value if res.local_long is not None \
        else float(agent.utility.certainty_value(agent.w0))
    v_short = res.local_short.value if res.local_short is not None \
        else float(agent.utility.certainty_value(agent.w0))
    return v_long - v_short


def discontinuity_probe(agent: Agent, scenario: Scenario) -> DiscontinuityProbe:
    """Demand jump across a seeker's long/short crossing price.

    The crossing sits exactly at the prior-expected price only in symmetric
    instances; skewed payoffs shift it slightly, so the probe first locates
    the price where the two side values tie (the gap falls strictly in the
    price by the envelope argument), then evaluates the taken position just
    below and above it.  A neutral control agent is probed at the mean and
    yields a vanishing jump.
    """
    if agent.ambiguity.alpha > 0.5:
        raise DomainError("the probe applies to seekers (neutral agents as control)")
    payoff = scenario.single_payoffs()
    mean, std = mean_std(agent.prior.probs, payoff)
    eps = 1e-6 * std
    if agent.ambiguity.alpha == 0.5 or agent.ambiguity.d == 0.0:
        crossing = mean
    else:
        band = reservation_interval(agent, scenario.with_price(mean))
        margin = 1e-9 * band.width
        lo, hi = band.eta_low + margin, band.eta_high - margin
        gap = lambda p: _side_value_gap(agent, scenario, p)
        crossing, _ = bisect_decreasing(gap, lo, hi, width_tol=1e-3 * eps)
    below = _global_theta(agent, scenario, crossing - eps)
    above = _global_theta(agent, scenario, crossing + eps)
    return DiscontinuityProbe(
        theta_below=below,
        theta_above=above,
        jump=below - above,
        price_step=eps,
        crossing_price=crossing,
    )
