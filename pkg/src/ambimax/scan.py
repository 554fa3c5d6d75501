"""Verification kernels shared by the test suite.

Dense value-function scans that every optimizer must beat, and central
finite differences validating the analytic derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ambiguity import value_alpha
from .errors import DomainError
from .scenario import Agent, Scenario, admissible_bounds

DEFAULT_POINTS_PER_SIDE = 2049
_EDGE = 1e-9
#: fraction of points packed into the innermost fraction of the range
_KINK_SHARE = 0.25
_KINK_RANGE = 0.01


@dataclass(frozen=True)
class GridScan:
    """Value-function samples with per-side argmax and interior local maxima."""

    grid: np.ndarray
    values: np.ndarray
    argmax_per_side: dict
    local_maxima: tuple

    def best(self, side: str):
        return self.argmax_per_side.get(side)


def _side_grid(limit: float, points: int) -> np.ndarray:
    """Hybrid spacing: a quarter of the points inside the innermost percent
    of the range (the kink region), the rest linear out to the bound."""
    inner_n = max(2, int(points * _KINK_SHARE))
    outer_n = max(2, points - inner_n)
    inner = np.geomspace(limit * 1e-9, limit * _KINK_RANGE, inner_n)
    outer = np.linspace(limit * _KINK_RANGE, limit, outer_n)
    return np.unique(np.concatenate([inner, outer]))


def _scan_limit(agent: Agent, scenario: Scenario, sign: float) -> float:
    """Finite scan range on one side; expands until the value turns down
    when the admissible set is unbounded."""
    bounds = admissible_bounds(agent, scenario)
    bound = bounds[1] if sign > 0 else -bounds[0]
    if math.isfinite(bound):
        return bound * (1.0 - _EDGE)
    limit = 1.0
    for _ in range(40):
        inner = value_alpha(agent, scenario, sign * limit * 0.5)
        edge = value_alpha(agent, scenario, sign * limit)
        if edge < inner:
            return limit
        limit *= 2.0
    return limit


def value_scan(agent: Agent, scenario: Scenario, price: float,
               points_per_side: int = DEFAULT_POINTS_PER_SIDE) -> GridScan:
    """Evaluate the preference on a kink-dense grid over both sides.

    Returns the per-side argmax and every interior local maximum; optimizer
    results are expected to match or beat the scan value.
    """
    sc = scenario.with_price(price)
    sc.require_interior_price()
    pos = _side_grid(_scan_limit(agent, sc, +1.0), points_per_side)
    neg = -_side_grid(_scan_limit(agent, sc, -1.0), points_per_side)[::-1]
    grid = np.concatenate([neg, [0.0], pos])
    values = np.array([value_alpha(agent, sc, t) for t in grid])
    if not np.all(np.isfinite(values)):
        raise DomainError("scan hit a non-finite value inside the admissible range")
    argmax = {}
    for side, mask in (("long", grid > 0), ("short", grid < 0)):
        idx = np.nonzero(mask)[0]
        best = idx[np.argmax(values[idx])]
        argmax[side] = (float(grid[best]), float(values[best]))
    interior = np.nonzero(
        (values[1:-1] > values[:-2]) & (values[1:-1] > values[2:])
    )[0] + 1
    local_maxima = tuple((float(grid[i]), float(values[i])) for i in interior)
    return GridScan(grid=grid, values=values, argmax_per_side=argmax, local_maxima=local_maxima)


def grid_step_near(scan: GridScan, theta: float) -> float:
    """Local grid spacing around a position, for one-grid-step assertions."""
    idx = int(np.argmin(np.abs(scan.grid - theta)))
    lo = scan.grid[max(idx - 1, 0)]
    hi = scan.grid[min(idx + 1, scan.grid.size - 1)]
    return float(max(hi - scan.grid[idx], scan.grid[idx] - lo))


def finite_difference_derivative(agent: Agent, scenario: Scenario, theta: float,
                                 order: int = 1, h: Optional[float] = None,
                                 price: Optional[float] = None) -> float:
    """Central finite difference of the preference value at theta != 0."""
    if price is not None:
        scenario = scenario.with_price(price)
    theta = float(theta)
    if theta == 0.0:
        raise DomainError("finite differences straddle the kink at zero; pick theta != 0")
    if h is None:
        h = (1e-6 if order == 1 else 1e-4) * max(1.0, abs(theta))
    if theta + h == theta or theta - h == theta:
        raise DomainError(f"step {h!r} underflows at theta={theta!r}")
    if abs(theta) <= h:
        raise DomainError(f"step {h!r} would cross the kink at zero from theta={theta!r}")
    v_hi = value_alpha(agent, scenario, theta + h)
    v_lo = value_alpha(agent, scenario, theta - h)
    if order == 1:
        return (v_hi - v_lo) / (2.0 * h)
    if order == 2:
        v_mid = value_alpha(agent, scenario, theta)
        return (v_hi - 2.0 * v_mid + v_lo) / h**2
    raise DomainError(f"order must be 1 or 2, got {order!r}")
