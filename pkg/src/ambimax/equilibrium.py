"""Multi-agent market clearing on a single asset.

First-best equilibria via excess-demand bisection, trade/no-trade
conditions, second-best Pareto equilibria with side-restricted seekers,
local second-best equilibria under a symmetric position restriction, and
exponential risk sharing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ambiguity import mean_std, value_alpha
from .demand import bisect_decreasing, reservation_interval, solve_demand
from .errors import BracketError, DomainError
from .scenario import Agent, Distribution, Scenario, require_divergence_bound
from .seeker import (
    LocalOptimum,
    SeekerDemand,
    _closed_form_side,
    _run_side,
    seeker_demand,
)

CLEARING_TOL = 1e-8
_PRICE_EDGE = 1e-6
_PRICE_WIDTH_TOL = 1e-13


@dataclass(frozen=True)
class Market:
    """A single-asset scenario, at least two agents, and net supply."""

    scenario: Scenario
    agents: tuple
    supply: float = 0.0

    def __post_init__(self):
        agents = tuple(self.agents)
        if len(agents) < 2:
            raise DomainError("a market needs at least two agents")
        if self.scenario.n_assets != 1:
            raise DomainError("market clearing is implemented for a single asset")
        for agent in agents:
            if len(agent.prior) != self.scenario.n_states:
                raise DomainError("every agent's prior must match the scenario state count")
        object.__setattr__(self, "agents", agents)


@dataclass(frozen=True)
class EquilibriumResult:
    price: float
    allocations: tuple
    residual: float
    kind: str  # "first_best" | "second_best" | "local_second_best" | "no_trade"
    interval: tuple
    diagnostics: dict = field(default_factory=dict)


def _agent_mean(agent: Agent, scenario: Scenario) -> float:
    return float(agent.prior.probs @ scenario.single_payoffs())


def nontriviality_condition(market: Market) -> bool:
    """True when at least two reservation intervals fail to overlap."""
    bands = [reservation_interval(agent, market.scenario) for agent in market.agents]
    return min(b.eta_high for b in bands) < max(b.eta_low for b in bands)


def sharpe_condition(agent1: Agent, agent2: Agent, scenario: Scenario) -> bool:
    """Trade condition for two common-variance agents via Sharpe-ratio spread.

    Equivalent to the reservation-interval condition in this configuration;
    the inequality is strict, a boundary tie means no trade.
    """
    payoff = scenario.single_payoffs()
    m1, s1 = mean_std(agent1.prior.probs, payoff)
    m2, s2 = mean_std(agent2.prior.probs, payoff)
    if abs(s1 - s2) > 1e-10:
        raise DomainError(f"payoff standard deviations differ: {s1!r} vs {s2!r}")
    d_low, d_high = (abs(agent1.delta), abs(agent2.delta))
    if m1 > m2:
        m1, m2 = m2, m1
        d_low, d_high = d_high, d_low
    return d_low + d_high < (m2 - m1) / s1


def _global_demand(agent: Agent, scenario: Scenario, price: float) -> float:
    """Unrestricted optimal position; seekers take their better side."""
    if agent.ambiguity.alpha >= 0.5:
        return solve_demand(agent, scenario, price).theta_star
    res = seeker_demand(agent, scenario, price)
    if res.global_side == "long":
        return res.local_long.theta
    if res.global_side == "short":
        return res.local_short.theta
    if res.global_side == "both":
        return res.local_long.theta
    return 0.0


def _price_bracket(scenario: Scenario):
    lo, hi = scenario.payoff_floor, scenario.payoff_ceiling
    width = hi - lo
    return lo + _PRICE_EDGE * width, hi - _PRICE_EDGE * width


def first_best_equilibrium(market: Market) -> EquilibriumResult:
    """Clearing price for unrestricted demands.

    With only averse/neutral agents and zero supply, existence is
    guaranteed: either the reservation intervals all overlap (no-trade, the
    midpoint of the overlap is reported) or aggregate excess demand changes
    sign strictly inside the no-arbitrage interval.  Markets containing
    seekers are solved best-effort: the seeker demand jump can straddle
    zero, in which case no clearing price exists and a no-trade result with
    diagnostics is returned.  Nonzero supply is accepted as an extension
    without an existence guarantee.
    """
    scenario = market.scenario
    for agent in market.agents:
        require_divergence_bound(agent.prior, agent.ambiguity)
    all_averse = all(agent.ambiguity.alpha >= 0.5 for agent in market.agents)
    bands = [reservation_interval(agent, scenario) for agent in market.agents]
    if market.supply == 0.0 and all_averse and not nontriviality_condition(market):
        overlap_lo = max(b.eta_low for b in bands)
        overlap_hi = min(b.eta_high for b in bands)
        price = 0.5 * (overlap_lo + overlap_hi)
        return EquilibriumResult(
            price=price,
            allocations=tuple(0.0 for _ in market.agents),
            residual=0.0,
            kind="no_trade",
            interval=(overlap_lo, overlap_hi),
            diagnostics={"reason": "reservation intervals overlap"},
        )

    def excess(price: float) -> float:
        return sum(_global_demand(a, scenario, price) for a in market.agents) + market.supply

    lo, hi = _price_bracket(scenario)
    z_lo, z_hi = excess(lo), excess(hi)
    if not (z_lo > 0.0 > z_hi):
        samples = [(lo, z_lo), (hi, z_hi)]
        raise BracketError(f"aggregate excess demand does not change sign: {samples!r}")
    width_tol = _PRICE_WIDTH_TOL * (hi - lo)
    price, residual = bisect_decreasing(excess, lo, hi, f_lo=z_lo, f_hi=z_hi,
                                        residual_tol=1e-9, width_tol=width_tol)
    allocations = tuple(_global_demand(a, scenario, price) for a in market.agents)
    residual = abs(sum(allocations) + market.supply)
    if residual < CLEARING_TOL:
        return EquilibriumResult(
            price=price,
            allocations=allocations,
            residual=residual,
            kind="first_best",
            interval=(lo, hi),
        )
    return EquilibriumResult(
        price=price,
        allocations=tuple(0.0 for _ in market.agents),
        residual=0.0,
        kind="no_trade",
        diagnostics={
            "reason": "demand jump straddles zero; no market-clearing price exists",
            "gap": residual,
            "allocations_at_price": allocations,
        },
        interval=(lo, hi),
    )


# ---------------------------------------------------------------------------
# Second-best equilibria: seekers restricted to the side opposite their
# first-best preference.
# ---------------------------------------------------------------------------


def _seeker_side_theta(agent: Agent, scenario: Scenario, price: float, side: str) -> float:
    if scenario.n_states == 2:
        opt = _closed_form_side(agent, scenario, price, side)
    else:
        opt = _run_side(agent, scenario, price, side)
    return opt.theta if opt is not None else 0.0


def _restricted_seeker_theta(agent: Agent, scenario: Scenario, price: float) -> float:
    """Side-restricted seeker argmax: short when her mean >= price, else long."""
    side = "short" if _agent_mean(agent, scenario) >= price else "long"
    return _seeker_side_theta(agent, scenario, price, side)


def _restricted_demand(agent: Agent, scenario: Scenario, price: float) -> float:
    if agent.ambiguity.alpha >= 0.5:
        return solve_demand(agent, scenario, price).theta_star
    return _restricted_seeker_theta(agent, scenario, price)


def _restricted_excess(market: Market, price: float) -> float:
    return sum(_restricted_demand(a, market.scenario, price) for a in market.agents) + market.supply


def _candidate_intervals(market: Market, pivot_idx: int):
    """Price intervals bracketing a side-restricted clearing.

    Upper candidate: from the smallest counterparty upper reservation bound
    lying strictly below the pivot seeker's own, up to the pivot's bound;
    the lower candidate mirrors it.  At the left (right) end all
    counterparties are inert while the seeker trades, at the pivot's bound
    the seeker drops out, so restricted excess demand changes sign.
    """
    scenario = market.scenario
    bands = [reservation_interval(agent, scenario) for agent in market.agents]
    pivot_band = bands[pivot_idx]
    others_hi = [b.eta_high for i, b in enumerate(bands) if i != pivot_idx]
    others_lo = [b.eta_low for i, b in enumerate(bands) if i != pivot_idx]
    intervals = []
    below = [e for e in others_hi if e < pivot_band.eta_high]
    if below:
        intervals.append((min(below), pivot_band.eta_high))
    above = [e for e in others_lo if e > pivot_band.eta_low]
    if above:
        intervals.append((pivot_band.eta_low, max(above)))
    return intervals


def _split_at_seeker_means(market: Market, lo: float, hi: float):
    """Sub-brackets between the seeker-mean breakpoints inside (lo, hi).

    A restricted seeker's side rule flips at her own prior mean, so the
    restricted excess demand can jump there; bisection runs within
    jump-free sub-intervals only.
    """
    means = sorted(
        _agent_mean(agent, market.scenario)
        for agent in market.agents
        if agent.ambiguity.alpha < 0.5
    )
    cuts = [m for m in means if lo < m < hi]
    edges = [lo] + cuts + [hi]
    gap = 1e-12 * (hi - lo)
    pairs = []
    for a, b in zip(edges[:-1], edges[1:]):
        aa = a + gap if a in cuts else a
        bb = b - gap if b in cuts else b
        if aa < bb:
            pairs.append((aa, bb))
    return pairs


def _bisect_restricted(market: Market, lo: float, hi: float) -> Optional[EquilibriumResult]:
    excess = lambda p: _restricted_excess(market, p)
    z_lo, z_hi = excess(lo), excess(hi)
    if not (z_lo > 0.0 > z_hi):
        return None
    width_tol = _PRICE_WIDTH_TOL * (hi - lo)
    price, _ = bisect_decreasing(excess, lo, hi, f_lo=z_lo, f_hi=z_hi,
                                 residual_tol=1e-9, width_tol=width_tol)
    allocations = tuple(_restricted_demand(a, market.scenario, price) for a in market.agents)
    residual = abs(sum(allocations) + market.supply)
    if residual >= CLEARING_TOL:
        return None
    return EquilibriumResult(
        price=price,
        allocations=allocations,
        residual=residual,
        kind="second_best",
        interval=(lo, hi),
    )


def second_best_equilibrium(market: Market):
    """Clearing prices when seekers are restricted to the unfavorable side.

    Searches both candidate intervals around the widest-band seeker and
    returns every equilibrium found (callers select); falls back to a scan
    of the whole no-arbitrage interval, and reports a diagnosed no-trade
    result when nothing clears (the existence condition is sufficient, not
    necessary).
    """
    if market.supply != 0.0:
        raise DomainError("second-best equilibria are defined for zero net supply")
    seekers = [i for i, a in enumerate(market.agents) if a.ambiguity.alpha < 0.5]
    if not seekers:
        raise DomainError("no ambiguity seeker present; use first_best_equilibrium")
    for agent in market.agents:
        require_divergence_bound(agent.prior, agent.ambiguity)
    pivot = max(seekers, key=lambda i: abs(market.agents[i].delta))
    results = []
    searched = []
    for lo, hi in _candidate_intervals(market, pivot):
        edge = 1e-9 * (hi - lo)
        for a, b in _split_at_seeker_means(market, lo + edge, hi - edge):
            searched.append((a, b))
            found = _bisect_restricted(market, a, b)
            if found is not None:
                results.append(found)
    if not results:
        lo, hi = _price_bracket(market.scenario)
        grid = np.linspace(lo, hi, 129)
        for a, b in _split_at_seeker_means(market, lo, hi):
            sub = grid[(grid >= a) & (grid <= b)]
            values = [_restricted_excess(market, p) for p in sub]
            for (p1, z1), (p2, z2) in zip(zip(sub, values), zip(sub[1:], values[1:])):
                if z1 > 0.0 > z2:
                    found = _bisect_restricted(market, p1, p2)
                    if found is not None:
                        results.append(found)
    if not results and len(market.agents) == 2 and len(seekers) == 2:
        # two seekers: the mean-based side rule puts near-identical priors on
        # the same side at every price, yet assigning one to each side always
        # clears on the band overlap and improves both
        results.extend(_seeker_pair_assignments(market))
    if not results:
        lo, hi = _price_bracket(market.scenario)
        return [EquilibriumResult(
            price=0.5 * (lo + hi),
            allocations=tuple(0.0 for _ in market.agents),
            residual=0.0,
            kind="no_trade",
            interval=(lo, hi),
            diagnostics={"reason": "no side-restricted clearing price found",
                         "searched": searched},
        )]
    return results


def _seeker_pair_assignments(market: Market):
    """Opposite-side clearings for a two-seeker market.

    With agent i long-only and agent j short-only, the paired excess demand
    is positive just above j's lower reservation bound and negative just
    below i's upper bound, so a nonzero clearing exists whenever those
    bounds leave room.
    """
    scenario = market.scenario
    bands = [reservation_interval(agent, scenario) for agent in market.agents]
    found = []
    for i_long, i_short in ((0, 1), (1, 0)):
        lo = bands[i_short].eta_low
        hi = bands[i_long].eta_high
        if lo >= hi:
            continue
        edge = 1e-9 * (hi - lo)
        lo, hi = lo + edge, hi - edge

        def paired(price, i_l=i_long, i_s=i_short):
            return (_seeker_side_theta(market.agents[i_l], scenario, price, "long")
                    + _seeker_side_theta(market.agents[i_s], scenario, price, "short"))

        z_lo, z_hi = paired(lo), paired(hi)
        if not (z_lo > 0.0 > z_hi):
            continue
        width_tol = _PRICE_WIDTH_TOL * (hi - lo)
        price, _ = bisect_decreasing(paired, lo, hi, f_lo=z_lo, f_hi=z_hi,
                                     residual_tol=1e-9, width_tol=width_tol)
        theta_long = _seeker_side_theta(market.agents[i_long], scenario, price, "long")
        theta_short = _seeker_side_theta(market.agents[i_short], scenario, price, "short")
        allocations = [0.0, 0.0]
        allocations[i_long] = theta_long
        allocations[i_short] = theta_short
        residual = abs(sum(allocations) + market.supply)
        if residual < CLEARING_TOL and theta_long > 0.0 > theta_short:
            found.append(EquilibriumResult(
                price=price,
                allocations=tuple(allocations),
                residual=residual,
                kind="second_best",
                interval=(lo, hi),
                diagnostics={"side_assignment": {i_long: "long", i_short: "short"}},
            ))
    return found


def local_second_best(market: Market, price: Optional[float] = None,
                      theta_restriction: Optional[float] = None) -> EquilibriumResult:
    """Clearing under a symmetric position restriction [-t, t].

    With the restriction given, computes the restricted argmaxes and
    reports the (possibly nonzero) clearing residual; with it absent,
    constructs t so that the restricted market clears at the chosen price
    (any price inside a candidate interval admits one).
    """
    if market.supply != 0.0:
        raise DomainError("local second-best equilibria are defined for zero net supply")
    seekers = [i for i, a in enumerate(market.agents) if a.ambiguity.alpha < 0.5]
    if not seekers:
        raise DomainError("no ambiguity seeker present")
    pivot = max(seekers, key=lambda i: abs(market.agents[i].delta))
    intervals = _candidate_intervals(market, pivot)
    if price is None:
        if not intervals:
            raise DomainError("the side-restriction condition fails: no candidate interval")
        lo, hi = intervals[0]
        price = 0.5 * (lo + hi)
    price = float(price)
    scenario = market.scenario
    interval = intervals[0] if intervals else _price_bracket(scenario)

    unrestricted = [_restricted_demand(a, scenario, price) for a in market.agents]

    def takes(t: float):
        out = []
        for agent, free in zip(market.agents, unrestricted):
            out.append(float(np.clip(free, -t, t)))
        return out

    if theta_restriction is not None:
        t = abs(float(theta_restriction))
    else:
        # the clamped excess is piecewise linear in t with kinks at the
        # unrestricted position magnitudes: solve for its largest root exactly
        breaks = sorted({abs(v) for v in unrestricted if abs(v) > 0.0})
        t = 0.0
        if breaks:
            scale = breaks[-1]
            values = [sum(takes(b)) for b in breaks]
            roots = [b for b, z in zip(breaks, values) if abs(z) < 1e-12 * max(1.0, scale)]
            if roots:
                t = roots[-1]
            else:
                pairs = list(zip([0.0] + breaks, [0.0] + values))
                for (b1, z1), (b2, z2) in zip(pairs[:-1], pairs[1:]):
                    if (z1 > 0.0 > z2) or (z1 < 0.0 < z2):
                        t = b1 - z1 * (b2 - b1) / (z2 - z1)
    allocations = tuple(takes(t))
    residual = abs(sum(allocations) + market.supply)
    if t == 0.0:
        return EquilibriumResult(
            price=price,
            allocations=tuple(0.0 for _ in market.agents),
            residual=0.0,
            kind="no_trade",
            interval=interval,
            diagnostics={"theta_restriction": (0.0, 0.0)},
        )
    return EquilibriumResult(
        price=price,
        allocations=allocations,
        residual=residual,
        kind="local_second_best",
        interval=interval,
        diagnostics={"theta_restriction": (-t, t)},
    )


# ---------------------------------------------------------------------------
# Exponential risk sharing and the disjoint-interval no-trade check.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskShareResult:
    theta_star: float
    exposure1: float
    exposure2: float
    foc_residual: float


def _total_compensation_slope(agent: Agent, scenario: Scenario, exposure: float) -> float:
    """d/dx of the certain wealth an exponential agent gives up to hold x units."""
    gamma = agent.utility.gamma
    payoff = scenario.single_payoffs()
    p0 = agent.prior.probs
    x = np.exp(-gamma * exposure * payoff)
    mean, std = mean_std(p0, x)
    dmean = float(p0 @ (-gamma * payoff * x))
    if std <= 1e-300:
        dstd = 0.0
    else:
        dstd = float(p0 @ ((x - mean) * (-gamma * payoff * x))) / std
    delta = agent.ambiguity.delta
    return (dmean + delta * dstd) / (gamma * (mean + delta * std))


def exponential_risk_sharing(agent1: Agent, agent2: Agent, scenario: Scenario,
                             theta1: float, theta2: float) -> RiskShareResult:
    """Efficient transfer of asset units between two exponential agents.

    Minimizes the sum of the agents' total compensations over the transfer;
    under a common prior and a common tilt the split depends only on the
    risk aversions: agent 1 ends up holding gamma2/(gamma1+gamma2) of the
    aggregate.
    """
    for agent in (agent1, agent2):
        if agent.utility.kind != "exponential":
            raise DomainError("risk sharing is implemented for exponential utilities")
        require_divergence_bound(agent.prior, agent.ambiguity)
    total = theta1 + theta2

    def slope(theta: float) -> float:
        # increasing in theta: first-order condition of the 1-D convex problem
        return (_total_compensation_slope(agent1, scenario, theta1 + theta)
                - _total_compensation_slope(agent2, scenario, theta2 - theta))

    scale = max(1.0, abs(theta1), abs(theta2), abs(total))
    lo, hi = -scale, scale
    for _ in range(80):
        if slope(lo) < 0.0:
            break
        lo *= 2.0
    else:
        raise BracketError("risk-sharing bracket expansion failed (lower)")
    for _ in range(80):
        if slope(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise BracketError("risk-sharing bracket expansion failed (upper)")
    width_tol = 1e-14 * max(1.0, hi - lo)
    theta, residual = bisect_decreasing(lambda t: -slope(t), lo, hi,
                                        residual_tol=1e-12, width_tol=width_tol)
    return RiskShareResult(
        theta_star=theta,
        exposure1=theta1 + theta,
        exposure2=theta2 - theta,
        foc_residual=residual,
    )


def _binomial_exponential_demand(agent: Agent, scenario: Scenario, price: float,
                                 side: str) -> float:
    """Closed-form exponential demand on one side of a two-state market."""
    payoff = scenario.single_payoffs()
    good = int(np.argmax(payoff))
    bad = 1 - good
    sg, sb = float(payoff[good]), float(payoff[bad])
    p = float(agent.prior.probs[good])
    tilt = agent.ambiguity.delta * math.sqrt(p * (1.0 - p))
    if side == "long":
        pg, pb = p - tilt, 1.0 - p + tilt
    else:
        pg, pb = p + tilt, 1.0 - p - tilt
    gamma = agent.utility.gamma
    return math.log((sg - price) * pg / ((price - sb) * pb)) / (gamma * (sg - sb))


def no_trade_despite_disjoint_intervals(market: Market) -> bool:
    """Whether a seeker/averse exponential binomial pair fails to trade
    even though their reservation intervals are disjoint.

    The seeker's demand jump at her own prior mean sets a floor on her
    desired position; trade requires the averse side's supply there to
    reach that floor.
    """
    if len(market.agents) != 2 or market.scenario.n_states != 2:
        raise DomainError("the check covers two-agent binomial markets")
    for agent in market.agents:
        if agent.utility.kind != "exponential":
            raise DomainError("the check covers exponential utilities")
        require_divergence_bound(agent.prior, agent.ambiguity)
    seekers = [a for a in market.agents if a.ambiguity.alpha < 0.5]
    averse = [a for a in market.agents if a.ambiguity.alpha > 0.5]
    if len(seekers) != 1 or len(averse) != 1:
        raise DomainError("the check needs exactly one seeker and one averse agent")
    seeker, hedger = seekers[0], averse[0]
    scenario = market.scenario
    band_s = reservation_interval(seeker, scenario)
    band_a = reservation_interval(hedger, scenario)
    mean_s = _agent_mean(seeker, scenario)
    if band_a.eta_high < band_s.eta_low:
        # candidate prices below the seeker's mean: seeker long, averse short
        seeker_floor = _binomial_exponential_demand(seeker, scenario, mean_s, "long")
        averse_supply = -_binomial_exponential_demand(hedger, scenario, mean_s, "short")
        return averse_supply < seeker_floor
    if band_s.eta_high < band_a.eta_low:
        seeker_floor = -_binomial_exponential_demand(seeker, scenario, mean_s, "short")
        averse_take = _binomial_exponential_demand(hedger, scenario, mean_s, "long")
        return averse_take < seeker_floor
    raise DomainError("reservation intervals are not disjoint; the check does not apply")
