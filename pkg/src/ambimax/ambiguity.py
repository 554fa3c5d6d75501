"""Inner optimization over the divergence ball.

Closed-form pessimist/optimist measures, the reduced value function
(expected utility minus a tilt times the utility standard deviation), an
independent projected-gradient oracle, tilting-bound checks, and the
quadratic-utility moment form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    ConvergenceError,
    DomainError,
    NegativeProbabilityError,
)
from .scenario import (
    Agent,
    AmbiguitySpec,
    Distribution,
    ReferencePrior,
    Scenario,
    WealthProfile,
    require_admissible,
    require_divergence_bound,
)

#: Standard deviations below this are treated as exactly zero (constant
#: profile branch), avoiding 0/0 in the tilt formulas.
CONSTANT_STD_TOL = 1e-14


def mean_std(probs: np.ndarray, values: np.ndarray):
    """Population mean and standard deviation under a probability vector."""
    m = float(probs @ values)
    var = float(probs @ (values - m) ** 2)
    return m, math.sqrt(max(var, 0.0))


def centered_residuals(probs: np.ndarray, values: np.ndarray):
    """(mean, std, residuals) with the residuals re-centered once.

    The compensation pass removes the float residue of the centering, which
    otherwise dominates when the values are nearly constant (tiny positions)
    and would push tilted probabilities visibly off the simplex.
    """
    mean = float(probs @ values)
    r = values - mean
    r = r - float(probs @ r)
    var = float(probs @ (r * r))
    return mean, math.sqrt(max(var, 0.0)), r


def state_utilities(agent: Agent, scenario: Scenario, theta) -> np.ndarray:
    """Per-state felicity at position theta.

    Standard kinds evaluate u on the wealth profile; the quasi-linear
    quadratic kind evaluates its time-additive form directly and supports
    no random endowment.
    """
    if agent.utility.state_dependent:
        if agent.has_endowment:
            raise DomainError("quadratic_quasilinear utility does not support random endowments")
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        gamma = agent.utility.gamma
        cash = agent.w0 - float(th @ scenario.prices)
        exposure = th @ scenario.payoffs
        return cash - (1.0 - gamma * exposure) ** 2 / (2.0 * gamma)
    profile = require_admissible(agent, scenario, theta)
    return np.asarray(agent.utility.value(profile.wealth))


def state_utility_system(agent: Agent, scenario: Scenario, theta: float):
    """Per-state (felicity, d/dtheta, d2/dtheta2) for a single-asset position."""
    payoff = scenario.single_payoffs()
    pi = scenario.price
    if agent.utility.state_dependent:
        th = float(np.atleast_1d(theta)[0])
        gamma = agent.utility.gamma
        u = state_utilities(agent, scenario, th)
        du = (payoff - pi) - gamma * th * payoff**2
        d2u = -gamma * payoff**2
        return u, du, d2u
    profile = require_admissible(agent, scenario, theta)
    w = profile.wealth
    excess = payoff - pi
    u = np.asarray(agent.utility.value(w))
    du = np.asarray(agent.utility.marginal(w)) * excess
    d2u = np.asarray(agent.utility.curvature(w)) * excess**2
    return u, du, d2u


def value_of_utilities(delta: float, probs: np.ndarray, utilities: np.ndarray) -> float:
    """E[u] - delta * S[u] under the given probability vector."""
    mean, std = mean_std(probs, utilities)
    if std <= CONSTANT_STD_TOL:
        return mean
    return mean - delta * std


@dataclass(frozen=True)
class InnerSolution:
    """Extremal measures over the divergence ball for fixed utility values."""

    worst: Distribution
    best: Distribution
    value_worst: float
    value_best: float
    divergence_worst: float
    divergence_best: float


def _closed_form_tilts(prior_probs: np.ndarray, sqrt_d: float, utilities: np.ndarray):
    """Pessimist/optimist tilt vectors; collapses to the prior when constant."""
    _, std, r = centered_residuals(prior_probs, utilities)
    if sqrt_d == 0.0 or std <= CONSTANT_STD_TOL:
        return prior_probs.copy(), prior_probs.copy()
    tilt = sqrt_d * r / std
    worst = prior_probs * (1.0 - tilt)
    best = prior_probs * (1.0 + tilt)
    return worst, best


def worst_best_closed_form(agent: Agent, utility_values) -> InnerSolution:
    """Closed-form pessimist and optimist measures for given utility values.

    Both measures tilt the prior proportionally to the centered utility; for
    a constant profile both collapse to the prior.  Negative entries raise,
    they are never clamped.
    """
    require_divergence_bound(agent.prior, agent.ambiguity)
    u = np.asarray(utility_values, dtype=float)
    p0 = agent.prior.probs
    if u.shape != p0.shape:
        raise DomainError(f"utility values shape {u.shape} does not match prior {p0.shape}")
    sqrt_d = math.sqrt(agent.ambiguity.d)
    worst, best = _closed_form_tilts(p0, sqrt_d, u)
    for name, vec in (("pessimist", worst), ("optimist", best)):
        if np.any(vec < 0.0):
            s = int(np.argmin(vec))
            raise NegativeProbabilityError(
                f"{name} tilt produced probability {vec[s]!r} at state index {s}"
            )
    prior = agent.prior
    worst_dist, best_dist = Distribution(worst), Distribution(best)
    return InnerSolution(
        worst=worst_dist,
        best=best_dist,
        value_worst=float(worst @ u),
        value_best=float(best @ u),
        divergence_worst=worst_dist.divergence(prior),
        divergence_best=best_dist.divergence(prior),
    )


def worst_best_with_state_exclusion(agent: Agent, utility_values) -> InnerSolution:
    """Boundary fallback when a tilted probability would go negative.

    The pessimist's nonnegativity can only bind at the maximum-utility
    state, the optimist's at the minimum-utility state.  When a plain tilt
    goes negative and that state's prior mass is below (c-1)/c, the state
    is pinned at zero and the remaining states are re-tilted under the
    conditional prior with the reduced budget c*(1 - mass) - 1.  Only the
    single-exclusion case is handled; the optimist side mirrors the
    pessimist construction (an extrapolation).
    """
    u = np.asarray(utility_values, dtype=float)
    p0 = agent.prior.probs
    c = agent.ambiguity.c
    if u.shape != p0.shape:
        raise DomainError(f"utility values shape {u.shape} does not match prior {p0.shape}")
    _, std = mean_std(p0, u)
    if std <= CONSTANT_STD_TOL or agent.ambiguity.d == 0.0:
        return worst_best_closed_form(agent, u)
    sqrt_d = math.sqrt(agent.ambiguity.d)
    plain_worst, plain_best = _closed_form_tilts(p0, sqrt_d, u)

    def one_side(plain: np.ndarray, extreme_idx: int, optimist: bool) -> np.ndarray:
        if np.all(plain >= 0.0):
            return plain
        mass = p0[extreme_idx]
        negatives = np.nonzero(plain < 0.0)[0]
        if set(negatives.tolist()) != {extreme_idx} or mass >= (c - 1.0) / c:
            raise NegativeProbabilityError(
                "state-exclusion fallback handles a single violating extreme state only"
            )
        keep = np.ones(p0.size, dtype=bool)
        keep[extreme_idx] = False
        cond = p0[keep] / (1.0 - mass)
        d_cut = c * (1.0 - mass) - 1.0
        worst_c, best_c = _closed_form_tilts(cond, math.sqrt(d_cut), u[keep])
        vec = np.zeros(p0.size)
        vec[keep] = best_c if optimist else worst_c
        if np.any(vec < 0.0):
            raise NegativeProbabilityError(
                "state-exclusion fallback still produced a negative probability; "
                "more than one state violates the divergence bound"
            )
        return vec

    worst_vec = one_side(plain_worst, int(np.argmax(u)), optimist=False)
    best_vec = one_side(plain_best, int(np.argmin(u)), optimist=True)
    prior = agent.prior
    worst_dist, best_dist = Distribution(worst_vec), Distribution(best_vec)
    return InnerSolution(
        worst=worst_dist,
        best=best_dist,
        value_worst=float(worst_vec @ u),
        value_best=float(best_vec @ u),
        divergence_worst=worst_dist.divergence(prior),
        divergence_best=best_dist.divergence(prior),
    )


def value_alpha(agent: Agent, scenario: Scenario, theta) -> float:
    """Preference value at position theta: E0[u(W)] - delta * S0[u(W)].

    Equals alpha * (worst-case expected utility) + (1 - alpha) * (best-case
    expected utility) over the divergence ball.
    """
    require_divergence_bound(agent.prior, agent.ambiguity)
    u = state_utilities(agent, scenario, theta)
    return value_of_utilities(agent.ambiguity.delta, agent.prior.probs, u)


def value_alpha_of_wealth(agent: Agent, wealth: np.ndarray) -> float:
    """Preference value of an arbitrary wealth profile (wealth-only utilities)."""
    require_divergence_bound(agent.prior, agent.ambiguity)
    if agent.utility.state_dependent:
        raise DomainError("wealth-profile evaluation is undefined for state-dependent utility")
    w = np.asarray(wealth, dtype=float)
    from .scenario import POSITIVE_WEALTH_FLOOR
    from .errors import InadmissibleWealthError

    if agent.utility.positive_domain and np.any(w <= POSITIVE_WEALTH_FLOOR):
        raise InadmissibleWealthError("wealth profile is not strictly positive")
    u = np.asarray(agent.utility.value(w))
    return value_of_utilities(agent.ambiguity.delta, agent.prior.probs, u)


class TiltingBounds(NamedTuple):
    ok: bool
    slack_max: float
    slack_min: float


def check_tilting_bounds(agent: Agent, utility_values) -> TiltingBounds:
    """Verify the utility spread stays inside the band keeping tilts positive.

    Checks max u < E0[u] + S0[u]/sqrt(d) and min u > E0[u] - S0[u]/sqrt(d)
    (non-strict at a constant profile) and returns the slacks.
    """
    u = np.asarray(utility_values, dtype=float)
    p0 = agent.prior.probs
    d = agent.ambiguity.d
    mean, std = mean_std(p0, u)
    if d == 0.0:
        return TiltingBounds(ok=True, slack_max=math.inf, slack_min=math.inf)
    band = std / math.sqrt(d)
    slack_max = mean + band - float(np.max(u))
    slack_min = float(np.min(u)) - (mean - band)
    if std <= CONSTANT_STD_TOL:
        ok = slack_max >= 0.0 and slack_min >= 0.0
    else:
        ok = slack_max > 0.0 and slack_min > 0.0
    return TiltingBounds(ok=ok, slack_max=slack_max, slack_min=slack_min)


def quadratic_moment_value(agent: Agent, scenario: Scenario, theta: float) -> float:
    """Quadratic-utility value from the first four payoff moments only.

    Differs from value_alpha by the constant w0 - 1/(2 gamma), independent
    of theta.
    """
    if agent.utility.kind != "quadratic_quasilinear":
        raise DomainError("quadratic_moment_value requires the quadratic_quasilinear kind")
    require_divergence_bound(agent.prior, agent.ambiguity)
    payoff = scenario.single_payoffs()
    pi = scenario.price
    th = float(np.atleast_1d(theta)[0])
    gamma = agent.utility.gamma
    delta = agent.ambiguity.delta
    p0 = agent.prior.probs
    m1, m2, m3, m4 = (float(p0 @ payoff**k) for k in (1, 2, 3, 4))
    # moments of (1 - gamma*theta*S)^2 expand into m1..m4
    g = gamma * th
    ey = 1.0 - 2.0 * g * m1 + g**2 * m2
    ey2 = 1.0 - 4.0 * g * m1 + 6.0 * g**2 * m2 - 4.0 * g**3 * m3 + g**4 * m4
    std_y = math.sqrt(max(ey2 - ey**2, 0.0))
    return th * (m1 - pi) - 0.5 * gamma * th**2 * m2 - delta * std_y / (2.0 * gamma)


def stochastic_dominance_check(agent: Agent, profile_a: WealthProfile, profile_b: WealthProfile) -> float:
    """Value gap V(W_a) - V(W_b) for statewise-ordered profiles.

    Requires W_a >= W_b everywhere with strict inequality somewhere; the
    gap is strictly positive because both extremal measures are equivalent
    to the prior.
    """
    wa, wb = profile_a.wealth, profile_b.wealth
    if wa.shape != wb.shape:
        raise DomainError("profiles have different lengths")
    if not (np.all(wa >= wb) and np.any(wa > wb)):
        raise DomainError("profiles are not statewise ordered with a strict improvement")
    gap = value_alpha_of_wealth(agent, wa) - value_alpha_of_wealth(agent, wb)
    if gap <= 0.0:
        raise DomainError(f"monotonicity violated: value gap {gap!r} is not positive")
    return gap


# ---------------------------------------------------------------------------
# Independent oracle: projected gradient with Dykstra-style alternating
# projections.  Shares no code path with the closed forms above.
# ---------------------------------------------------------------------------


def _project_plane_ball(v: np.ndarray, p0: np.ndarray, c: float) -> np.ndarray:
    """Euclidean projection onto {x : sum x = 1, sum x^2 / p0 <= c}.

    For a binding ball the scaled dual point is x = (v - nu) p0 / (p0 + lam)
    with nu eliminated by the plane constraint; the remaining scalar solves
    a monotone 1-D equation by bracketed secant steps.
    """
    invp0 = 1.0 / p0
    plane = v - (float(v.sum()) - 1.0) / v.size
    h_plane = float(np.dot(plane * plane, invp0)) - c
    if h_plane <= 0.0:
        return plane

    def evaluate(lam: float):
        w = p0 / (p0 + lam)
        nu = (float(np.dot(v, w)) - 1.0) / float(w.sum())
        x = (v - nu) * w
        return x, float(np.dot(x * x, invp0)) - c

    lo, h_lo = 0.0, h_plane
    hi = 1.0
    x, h_hi = evaluate(hi)
    while h_hi > 0.0:
        lo, h_lo = hi, h_hi
        hi *= 4.0
        if hi > 1e18:
            raise ConvergenceError("plane/ball projection failed to bracket its dual scalar")
        x, h_hi = evaluate(hi)
    # Illinois-damped false position: immune to one-sided stagnation
    side = 0
    val = h_lo
    for _ in range(200):
        denom = h_hi - h_lo
        lam = lo - h_lo * (hi - lo) / denom if denom != 0.0 else 0.5 * (lo + hi)
        if not (lo < lam < hi):
            lam = 0.5 * (lo + hi)
        x, val = evaluate(lam)
        if abs(val) < 1e-15 * max(c, 1.0) or (hi - lo) < 1e-16 * max(1.0, hi):
            return x
        if val > 0.0:
            lo, h_lo = lam, val
            if side == 1:
                h_hi *= 0.5
            side = 1
        else:
            hi, h_hi = lam, val
            if side == -1:
                h_lo *= 0.5
            side = -1
    raise ConvergenceError(f"plane/ball projection dual solve stalled (residual {val!r})")


def _project_feasible(y: np.ndarray, p0: np.ndarray, c: float,
                      tol: float = 1e-13, max_cycles: int = 6000) -> np.ndarray:
    """Dykstra alternating projection onto {sum p = 1, divergence <= c, p >= 0}.

    The plane and ball are handled as one exactly projectable set; the
    nonnegative orthant alternates against it.  With the divergence bound
    satisfied the orthant is inactive at the limit and the alternation
    settles in a few cycles.  A boundary-active limit makes the two sets
    tangent and the alternation sublinear; coordinates crushed toward zero
    are then pinned and the reduced problem is re-projected.  Exits only at
    a point feasible for everything to float precision.
    """
    x = y.copy()
    corr_o = np.zeros_like(y)
    corr_b = np.zeros_like(y)
    x_mid = None
    for cycle in range(max_cycles):
        t = x + corr_o
        xo = np.maximum(t, 0.0)
        corr_o = t - xo
        t = xo + corr_b
        xb = _project_plane_ball(t, p0, c)
        corr_b = t - xb
        increment = float(np.max(np.abs(xb - x)))
        x = xb
        if cycle == max_cycles // 2:
            x_mid = x.copy()
        if increment < tol:
            nonneg = float(np.min(x)) > -1e-12
            in_ball = float(np.sum(x**2 / p0)) <= c + 1e-12
            if nonneg and in_ball:
                break
    else:
        # coordinates still small and steadily shrinking head for the boundary;
        # interior coordinates have flattened out by the back half of the run
        xc = np.clip(x, 0.0, None)
        xmc = np.clip(x_mid, 0.0, None)
        crushed = (xc < 5e-2) & (xc < 0.75 * xmc + 1e-9)
        if not np.any(crushed) or np.all(crushed):
            raise ConvergenceError("Dykstra projection did not reach the intersection")
        keep = ~crushed
        reduced = _project_feasible(y[keep], p0[keep], c, tol=tol, max_cycles=max_cycles)
        x = np.zeros_like(y)
        x[keep] = reduced
        return x
    # float dust only: entries a few ulp below zero, sum a few ulp off one
    x = np.clip(x, 0.0, None)
    return x / float(np.sum(x))


def _pgd_extremize(p0: np.ndarray, c: float, u: np.ndarray, minimize: bool,
                   max_iter: int) -> np.ndarray:
    """Projected gradient with diminishing steps for a linear objective.

    Steps follow the in-plane gradient component (the feasible set lives in
    the probability plane), kept at a moderate length so the alternating
    projection stays numerically exact; a descent check halves any step
    that fails to improve.  The binding constraint makes the feasible set
    strictly convex, so the pull-backs contract to the support point.
    """
    grad = u if minimize else -u
    inplane = grad - float(np.mean(grad))
    scale = float(np.max(np.abs(inplane)))
    if scale == 0.0:
        return p0.copy()  # objective constant on the plane
    step0 = 2.0 / scale
    p = p0.copy()
    obj = float(grad @ p)
    stable = 0
    for k in range(1, min(max_iter, 600) + 1):
        step = step0 / math.sqrt(k)
        for _ in range(60):
            p_new = _project_feasible(p - step * inplane, p0, c)
            obj_new = float(grad @ p_new)
            if obj_new <= obj + 1e-13 * max(1.0, abs(obj)):
                break
            step *= 0.5
        else:
            raise ConvergenceError("projected-gradient oracle could not find a descent step")
        if float(np.max(np.abs(p_new - p))) < 1e-14 and k >= 6:
            stable += 1
            if stable >= 3:
                return p_new
        else:
            stable = 0
        p, obj = p_new, obj_new
    raise ConvergenceError("projected-gradient oracle did not stabilize")


def _grid_extremize(p0: np.ndarray, c: float, u: np.ndarray, minimize: bool,
                    resolution: float) -> np.ndarray:
    """Exhaustive scan of the simplex at the given resolution (n <= 3)."""
    n = p0.size
    sign = 1.0 if minimize else -1.0
    best_val, best_p = math.inf, None
    if n == 2:
        total = int(round(1.0 / resolution)) + 1
        for start in range(0, total, 10_000_000):
            stop = min(start + 10_000_000, total)
            p1 = np.arange(start, stop, dtype=float) * resolution
            p1 = np.minimum(p1, 1.0)
            p2 = 1.0 - p1
            feas = p1**2 / p0[0] + p2**2 / p0[1] <= c
            if not np.any(feas):
                continue
            vals = sign * (u[0] * p1 + u[1] * p2)
            idx = int(np.argmin(np.where(feas, vals, math.inf)))
            if vals[idx] < best_val:
                best_val = float(vals[idx])
                best_p = np.array([p1[idx], p2[idx]])
    elif n == 3:
        steps = int(round(1.0 / resolution)) + 1
        grid = np.arange(steps, dtype=float) * resolution
        for a in grid:
            b = grid[grid <= 1.0 - a + 1e-15]
            cc = 1.0 - a - b
            cc = np.clip(cc, 0.0, None)
            feas = a**2 / p0[0] + b**2 / p0[1] + cc**2 / p0[2] <= c
            if not np.any(feas):
                continue
            vals = sign * (u[0] * a + u[1] * b + u[2] * cc)
            idx = int(np.argmin(np.where(feas, vals, math.inf)))
            if vals[idx] < best_val:
                best_val = float(vals[idx])
                best_p = np.array([a, b[idx], cc[idx]])
    else:
        raise DomainError("grid oracle supports n <= 3 only")
    if best_p is None:
        raise ConvergenceError("grid oracle found no feasible point")
    return best_p


def worst_best_oracle(prior: ReferencePrior, c: float, utility_values, *,
                      method: str = "pgd", max_iter: int = 1_000_000,
                      grid_resolution: float = 1e-3) -> InnerSolution:
    """Independent min/max of sum_s u_s p_s over the divergence ball.

    Testing-grade solver (n <= 8): projected gradient with Dykstra-style
    alternating projections, or an exhaustive simplex grid for n <= 3.
    """
    u = np.asarray(utility_values, dtype=float)
    p0 = prior.probs
    if u.shape != p0.shape:
        raise DomainError(f"utility values shape {u.shape} does not match prior {p0.shape}")
    if p0.size > 8:
        raise DomainError("the oracle is meant for testing; n <= 8 required")
    if c < 1.0:
        raise DomainError(f"divergence budget must be >= 1, got {c!r}")
    if c - 1.0 <= 1e-15:
        worst = best = Distribution(p0.copy())
        val = float(p0 @ u)
        return InnerSolution(worst, best, val, val, worst.divergence(prior), best.divergence(prior))
    if method == "pgd":
        worst_vec = _pgd_extremize(p0, c, u, minimize=True, max_iter=max_iter)
        best_vec = _pgd_extremize(p0, c, u, minimize=False, max_iter=max_iter)
    elif method == "grid":
        worst_vec = _grid_extremize(p0, c, u, minimize=True, resolution=grid_resolution)
        best_vec = _grid_extremize(p0, c, u, minimize=False, resolution=grid_resolution)
    else:
        raise DomainError(f"unknown oracle method {method!r}")
    worst, best = Distribution(worst_vec), Distribution(best_vec)
    return InnerSolution(
        worst=worst,
        best=best,
        value_worst=float(worst_vec @ u),
        value_best=float(best_vec @ u),
        divergence_worst=worst.divergence(prior),
        divergence_best=best.divergence(prior),
    )
