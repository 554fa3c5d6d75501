"""Single-asset optimal demand for ambiguity-averse and neutral agents.

One-sided derivatives at zero, first-order-condition root finding by
bisection, reservation intervals, demand curves, martingale-measure
extraction, comparative statics, and random-endowment variants.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .ambiguity import (
    CONSTANT_STD_TOL,
    centered_residuals,
    mean_std,
    state_utilities,
    state_utility_system,
    value_alpha,
    worst_best_closed_form,
)
from .errors import BracketError, DomainError
from .scenario import (
    Agent,
    Distribution,
    Scenario,
    admissible_bounds,
    endowed_admissible_bounds,
    require_divergence_bound,
)

#: Bisection stops when |V'| drops below this residual ...
FOC_RESIDUAL_TOL = 1e-10
#: ... or when the bracket width falls below this relative tolerance.
THETA_REL_TOL = 1e-12

_EDGE_THETA = 1e-10     # initial inner bracket endpoint next to the kink at zero
_EDGE_BOUND = 1e-9      # relative pullback from the admissible-box boundary
_ZERO_SIDE_TOL = 1e-12  # |theta| below this counts as a zero position

ENDOWMENT_FIT_TOL = 1e-10


@dataclass(frozen=True)
class ReservationBounds:
    """Price band [eta_low, eta_high] on which an averse agent stays out."""

    eta_low: float
    eta_high: float

    @property
    def width(self) -> float:
        return self.eta_high - self.eta_low

    def contains(self, price: float) -> bool:
        return self.eta_low <= price <= self.eta_high


@dataclass(frozen=True)
class DemandResult:
    """Optimal position with first-order and pricing diagnostics."""

    theta_star: float
    side: str  # "long" | "short" | "zero"
    foc_residual: float
    value: float
    worst: Distribution
    best: Distribution
    martingale: Optional[Distribution]
    pricing_residual: Optional[float]


def reservation_interval(agent: Agent, scenario: Scenario) -> ReservationBounds:
    """eta_low/high = E0[S] -/+ |delta| * S0[S]; strictly inside the payoff range."""
    require_divergence_bound(agent.prior, agent.ambiguity)
    payoff = scenario.single_payoffs()
    mean, std = mean_std(agent.prior.probs, payoff)
    tilt = abs(agent.ambiguity.delta) * std
    return ReservationBounds(eta_low=mean - tilt, eta_high=mean + tilt)


def derivative(agent: Agent, scenario: Scenario, theta: float,
               price: Optional[float] = None) -> float:
    """Marginal value of the position away from the kink at zero.

    V'(theta) = E0[du] - delta * Cov0(u, du) / S0[u], where du is the
    statewise derivative of felicity with respect to theta.
    """
    if price is not None:
        scenario = scenario.with_price(price)
    th = float(np.atleast_1d(theta)[0])
    if th == 0.0:
        raise DomainError("the value function has a kink at zero; use the one-sided limits")
    require_divergence_bound(agent.prior, agent.ambiguity)
    u, du, _ = state_utility_system(agent, scenario, th)
    p0 = agent.prior.probs
    mean_u, std_u = mean_std(p0, u)
    e_du = float(p0 @ du)
    delta = agent.ambiguity.delta
    if delta == 0.0:
        return e_du
    if std_u <= CONSTANT_STD_TOL:
        raise DomainError("utility profile is constant at this position (kink); no derivative")
    cov = float(p0 @ ((u - mean_u) * du))
    return e_du - delta * cov / std_u


def second_derivative(agent: Agent, scenario: Scenario, theta: float,
                      price: Optional[float] = None) -> float:
    """Analytic second derivative of the value function away from zero."""
    if price is not None:
        scenario = scenario.with_price(price)
    th = float(np.atleast_1d(theta)[0])
    if th == 0.0:
        raise DomainError("the value function has a kink at zero; no second derivative")
    require_divergence_bound(agent.prior, agent.ambiguity)
    u, du, d2u = state_utility_system(agent, scenario, th)
    p0 = agent.prior.probs
    mean_u, std_u = mean_std(p0, u)
    e_d2u = float(p0 @ d2u)
    delta = agent.ambiguity.delta
    if delta == 0.0:
        return e_d2u
    if std_u <= CONSTANT_STD_TOL:
        raise DomainError("utility profile is constant at this position (kink)")
    uc = u - mean_u
    cov_u_d2u = float(p0 @ (uc * d2u))
    mean_du = float(p0 @ du)
    var_du = float(p0 @ (du - mean_du) ** 2)
    cov_u_du = float(p0 @ (uc * du))
    return (
        e_d2u
        - delta * cov_u_d2u / std_u
        - delta / std_u * (var_du - cov_u_du**2 / std_u**2)
    )


def one_sided_derivatives_at_zero(agent: Agent, scenario: Scenario,
                                  price: Optional[float] = None):
    """(right, left) limits of V' at zero; they differ unless delta = 0.

    right = E0[b] - delta * S0[b] and left = E0[b] + delta * S0[b], where b
    is the statewise marginal at theta = 0 (u'(w0) * (S - pi) for wealth
    utilities).
    """
    if price is not None:
        scenario = scenario.with_price(price)
    if agent.has_endowment:
        raise DomainError("one-sided limits at zero assume zero endowment")
    require_divergence_bound(agent.prior, agent.ambiguity)
    payoff = scenario.single_payoffs()
    pi = scenario.price
    if agent.utility.state_dependent:
        b = payoff - pi
    else:
        b = float(agent.utility.marginal(agent.w0)) * (payoff - pi)
    mean_b, std_b = mean_std(agent.prior.probs, b)
    delta = agent.ambiguity.delta
    return (mean_b - delta * std_b, mean_b + delta * std_b)


def bisect_decreasing(f: Callable[[float], float], lo: float, hi: float, *,
                      f_lo: Optional[float] = None, f_hi: Optional[float] = None,
                      residual_tol: Optional[float] = None,
                      width_tol: float = 0.0) -> tuple:
    """Bisection for a decreasing function with a sign change on [lo, hi].

    Returns (root, residual).  Runs the bracket down to width_tol;
    residual_tol, when given, allows an early exit on a small function
    value.  Chosen over Newton because the objective derivative is monotone
    but only piecewise smooth near the domain edges, and bisection is
    unconditionally convergent.
    """
    f_lo = f(lo) if f_lo is None else f_lo
    f_hi = f(hi) if f_hi is None else f_hi
    if f_lo < 0.0 or f_hi > 0.0:
        raise BracketError(
            f"no sign change: f({lo!r})={f_lo!r}, f({hi!r})={f_hi!r}"
        )
    mid, f_mid = lo, f_lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = f(mid)
        if (hi - lo) < width_tol or (residual_tol is not None and abs(f_mid) < residual_tol):
            return mid, abs(f_mid)
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
    return mid, abs(f_mid)


def _expand_upper_bracket(f: Callable[[float], float], start: float) -> tuple:
    """Double outward until f goes negative (unbounded admissible set)."""
    hi = start
    for _ in range(80):
        val = f(hi)
        if math.isnan(val) or val < 0.0:
            # overflow far out means the derivative is certainly negative there
            return hi, val if not math.isnan(val) else -math.inf
        hi *= 2.0
    raise BracketError("derivative never changed sign while expanding the bracket")


def _positive_side_bracket(agent: Agent, scenario: Scenario, bounds) -> tuple:
    lo = _EDGE_THETA
    if math.isinf(bounds[1]):
        hi, f_hi = _expand_upper_bracket(lambda t: derivative(agent, scenario, t), 1.0)
        return lo, hi, None, f_hi
    return lo, bounds[1] * (1.0 - _EDGE_BOUND), None, None


def _negative_side_bracket(agent: Agent, scenario: Scenario, bounds) -> tuple:
    hi = -_EDGE_THETA
    if math.isinf(bounds[0]):
        lo_mag, f_val = _expand_upper_bracket(lambda t: -derivative(agent, scenario, -t), 1.0)
        return -lo_mag, hi, -f_val if not math.isinf(f_val) else math.inf, None
    return bounds[0] * (1.0 - _EDGE_BOUND), hi, None, None


def _zero_result(agent: Agent, scenario: Scenario) -> DemandResult:
    prior = Distribution(agent.prior.probs.copy())
    if agent.utility.state_dependent:
        value = value_alpha(agent, scenario, 0.0)
    else:
        value = float(agent.utility.value(agent.w0))
    return DemandResult(
        theta_star=0.0,
        side="zero",
        foc_residual=0.0,
        value=value,
        worst=prior,
        best=Distribution(agent.prior.probs.copy()),
        martingale=None,
        pricing_residual=None,
    )


def martingale_measure(agent: Agent, scenario: Scenario, theta: float):
    """Effective belief P* and the utility-gradient tilt Q pricing the asset.

    Returns (p_star, q, pricing_residual) with residual |E_Q[S] - pi|.
    """
    u, _, _ = state_utility_system(agent, scenario, theta)
    payoff = scenario.single_payoffs()
    pi = scenario.price
    p0 = agent.prior.probs
    _, std_u, resid = centered_residuals(p0, u)
    delta = agent.ambiguity.delta
    if std_u <= CONSTANT_STD_TOL:
        p_star = p0.copy()
    else:
        p_star = p0 * (1.0 - delta * resid / std_u)
    if agent.utility.state_dependent:
        raise DomainError("martingale extraction is defined for wealth utilities")
    from .scenario import wealth_profile

    w = wealth_profile(agent, scenario, theta).wealth
    up = np.asarray(agent.utility.marginal(w))
    q = p_star * up
    q = q / float(np.sum(q))
    residual = abs(float(q @ payoff) - pi)
    return Distribution(p_star), Distribution(q), residual


def _finish_result(agent: Agent, scenario: Scenario, theta: float, side: str,
                   residual: float) -> DemandResult:
    u = state_utilities(agent, scenario, theta)
    inner = worst_best_closed_form(agent, u)
    _, q, pricing_residual = martingale_measure(agent, scenario, theta)
    return DemandResult(
        theta_star=theta,
        side=side,
        foc_residual=residual,
        value=value_alpha(agent, scenario, theta),
        worst=inner.worst,
        best=inner.best,
        martingale=q,
        pricing_residual=pricing_residual,
    )


def _validate_demand_inputs(agent: Agent, scenario: Scenario, price: float) -> Scenario:
    scenario = scenario.with_price(price)
    scenario.require_interior_price()
    require_divergence_bound(agent.prior, agent.ambiguity)
    if not agent.utility.satisfies_inada:
        raise DomainError(
            f"{agent.utility.kind} utility does not satisfy the Inada conditions required here"
        )
    return scenario


def solve_demand(agent: Agent, scenario: Scenario, price: float) -> DemandResult:
    """Unique optimal position of an averse or neutral agent at the given price.

    Zero on the closed reservation interval; otherwise the single root of
    the marginal value on the side selected by the one-sided limits at zero.
    """
    if agent.ambiguity.alpha < 0.5:
        raise DomainError("solve_demand requires alpha >= 1/2; use the seeker module instead")
    if agent.has_endowment:
        raise DomainError("use solve_demand_with_endowment for agents with random endowments")
    scenario = _validate_demand_inputs(agent, scenario, price)
    band = reservation_interval(agent, scenario)
    if band.contains(price):
        return _zero_result(agent, scenario)
    bounds = admissible_bounds(agent, scenario)
    span = bounds[1] - bounds[0] if all(map(math.isfinite, bounds)) else None
    f = lambda t: derivative(agent, scenario, t)
    right_limit, left_limit = one_sided_derivatives_at_zero(agent, scenario)
    if price < band.eta_low:
        lo, hi, f_lo, f_hi = _positive_side_bracket(agent, scenario, bounds)
        side = "long"
        # just below the band the root can sit inside the kink-side gap
        if f_lo is None:
            f_lo = f(lo)
        if f_lo < 0.0:
            lo, f_lo = 0.0, right_limit
    else:
        lo, hi, f_lo, f_hi = _negative_side_bracket(agent, scenario, bounds)
        side = "short"
        if f_hi is None:
            f_hi = f(hi)
        if f_hi > 0.0:
            hi, f_hi = 0.0, left_limit
    width_tol = THETA_REL_TOL * (span if span is not None else (hi - lo))
    theta, residual = bisect_decreasing(f, lo, hi, f_lo=f_lo, f_hi=f_hi, width_tol=width_tol)
    return _finish_result(agent, scenario, theta, side, residual)


def _map_maybe_parallel(fn, items):
    workers = int(os.environ.get("AMBIMAX_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def demand_curve(agent: Agent, scenario: Scenario, price_grid: Sequence[float]):
    """Demand at each grid price, in grid order.

    Averse/neutral agents yield DemandResult entries; seekers delegate to
    the seeker module and yield SeekerDemand entries carrying both local
    optima.
    """
    prices = [float(p) for p in price_grid]
    if agent.ambiguity.alpha >= 0.5:
        solve = lambda p: solve_demand(agent, scenario, p)
    else:
        from .seeker import seeker_demand

        solve = lambda p: seeker_demand(agent, scenario, p)
    results = _map_maybe_parallel(solve, prices)
    return list(zip(prices, results))


@dataclass(frozen=True)
class ComparativeStaticsReport:
    alphas: tuple
    thetas: tuple
    side: str
    expected_direction: str  # "decreasing" on the long side, "increasing" on the short side
    monotone: bool
    testable: bool
    note: str


def comparative_statics_alpha(agent: Agent, scenario: Scenario, price: float,
                              alphas: Sequence[float]) -> ComparativeStaticsReport:
    """Demand across increasing alpha at a fixed price outside the band.

    Positions shrink in magnitude as aversion grows when relative risk
    aversion stays at or above one on the realized wealth range; if that
    condition fails the report is flagged untestable rather than failed.
    """
    alphas = tuple(sorted(float(a) for a in alphas))
    if any(not (0.5 < a <= 1.0) for a in alphas):
        raise DomainError("comparative statics runs over alphas in (1/2, 1]")
    thetas = []
    testable = True
    note = ""
    side = None
    for a in alphas:
        agent_a = agent.with_alpha(a)
        result = solve_demand(agent_a, scenario, price)
        if result.side == "zero":
            raise DomainError(
                f"price {price!r} falls inside the reservation band at alpha={a!r}; "
                "pick a price outside every tested band"
            )
        if side is None:
            side = result.side
        elif side != result.side:
            raise DomainError("tested alphas disagree on the trade side")
        thetas.append(result.theta_star)
        from .scenario import wealth_profile

        w = wealth_profile(agent_a, scenario.with_price(price), result.theta_star).wealth
        rra = np.asarray(agent_a.utility.relative_risk_aversion(w))
        if float(np.min(rra)) < 1.0 - 1e-12:
            testable = False
            note = (
                f"relative risk aversion dips to {float(np.min(rra)):.6g} < 1 on the realized "
                "wealth range; the monotonicity claim is untestable here"
            )
    expected = "decreasing" if side == "long" else "increasing"
    diffs = np.diff(thetas)
    monotone = bool(np.all(diffs < 0.0)) if side == "long" else bool(np.all(diffs > 0.0))
    return ComparativeStaticsReport(
        alphas=alphas,
        thetas=tuple(thetas),
        side=side,
        expected_direction=expected,
        monotone=monotone,
        testable=testable,
        note=note,
    )


def endowment_affine_fit(agent: Agent, scenario: Scenario):
    """Least-squares fit endowment ~ a + b * payoff; returns (a, b, residual)."""
    endow = agent.endowment_vector(scenario.n_states)
    payoff = scenario.single_payoffs()
    design = np.column_stack([np.ones_like(payoff), payoff])
    coef, *_ = np.linalg.lstsq(design, endow, rcond=None)
    residual = float(np.max(np.abs(design @ coef - endow)))
    return float(coef[0]), float(coef[1]), residual


def solve_demand_with_endowment(agent: Agent, scenario: Scenario, price: float) -> DemandResult:
    """Optimal position when terminal wealth carries a random endowment.

    An endowment affine in the payoff shifts the whole problem: the kink
    moves to minus the embedded position and demand is constant there over
    the reservation band.  A linearly independent endowment removes the
    kink entirely and the zero-demand price set collapses to a point.
    """
    if agent.ambiguity.alpha < 0.5:
        raise DomainError("endowment demand is implemented for alpha >= 1/2")
    if not agent.has_endowment:
        return solve_demand(agent, scenario, price)
    scenario = _validate_demand_inputs(agent, scenario, price)
    a, b, fit_residual = endowment_affine_fit(agent, scenario)
    if fit_residual < ENDOWMENT_FIT_TOL:
        shifted_w0 = agent.w0 + a + b * price
        if agent.utility.positive_domain and shifted_w0 <= 0.0:
            raise DomainError(
                f"affine endowment drives the equivalent cash position to {shifted_w0!r} <= 0"
            )
        import dataclasses as _dc

        bare = _dc.replace(agent, w0=shifted_w0, endowment=None)
        inner = solve_demand(bare, scenario, price)
        theta = inner.theta_star - b
        side = _side_of(theta)
        residual = inner.foc_residual
    else:
        bounds = endowed_admissible_bounds(agent, scenario)
        f = lambda t: derivative(agent, scenario, t)
        if math.isinf(bounds[1]):
            hi, _ = _expand_upper_bracket(f, 1.0)
        else:
            hi = bounds[1] * (1.0 - _EDGE_BOUND) if bounds[1] > 0 else bounds[1] + _EDGE_BOUND * abs(bounds[1])
        if math.isinf(bounds[0]):
            lo_mag, _ = _expand_upper_bracket(lambda t: -f(-t), 1.0)
            lo = -lo_mag
        else:
            lo = bounds[0] * (1.0 - _EDGE_BOUND) if bounds[0] < 0 else bounds[0] + _EDGE_BOUND * abs(bounds[0])
        width_tol = THETA_REL_TOL * (hi - lo)
        theta, residual = bisect_decreasing(f, lo, hi, width_tol=width_tol)
        side = _side_of(theta)
    u = state_utilities(agent, scenario, theta)
    inner_sol = worst_best_closed_form(agent, u)
    _, q, pricing_residual = martingale_measure(agent, scenario, theta)
    return DemandResult(
        theta_star=theta,
        side=side,
        foc_residual=residual,
        value=value_alpha(agent, scenario, theta),
        worst=inner_sol.worst,
        best=inner_sol.best,
        martingale=q,
        pricing_residual=pricing_residual,
    )


def _side_of(theta: float) -> str:
    if abs(theta) <= _ZERO_SIDE_TOL:
        return "zero"
    return "long" if theta > 0.0 else "short"
