"""Verification kernels: dense value scans and finite differences."""

import numpy as np
import pytest

import ambimax as ax
from conftest import make_agent


class TestValueScan:
    def test_grid_inside_bounds_and_values_finite(self, binomial):
        agent = make_agent("power", 2.0, prior=(0.75, 0.25))
        scan = ax.value_scan(agent, binomial, 0.98, points_per_side=257)
        lo, hi = ax.admissible_bounds(agent, binomial, price=0.98)
        assert float(scan.grid.min()) > lo
        assert float(scan.grid.max()) < hi
        assert np.all(np.isfinite(scan.values))

    def test_argmax_matches_demand_solver(self, binomial):
        agent = make_agent("power", 2.0, prior=(0.75, 0.25))
        for price in (0.95, 0.99, 1.08):
            scan = ax.value_scan(agent, binomial, price)
            result = ax.solve_demand(agent, binomial, price)
            if result.side == "zero":
                continue
            best_theta = scan.best(result.side)[0]
            step = ax.grid_step_near(scan, result.theta_star)
            assert abs(best_theta - result.theta_star) <= 2 * step
            assert scan.best(result.side)[1] <= result.value + 1e-9

    def test_seeker_has_two_interior_maxima(self, binomial):
        agent = make_agent("log", prior=(0.5, 0.5), c=1.01, alpha=0.25)
        scan = ax.value_scan(agent, binomial, 1.0, points_per_side=513)
        signs = {1 if t > 0 else -1 for t, _ in scan.local_maxima}
        assert signs == {1, -1}

    def test_unbounded_domain_gets_a_finite_window(self, binomial):
        agent = make_agent("exponential", 2.0, prior=(0.75, 0.25))
        scan = ax.value_scan(agent, binomial, 0.99, points_per_side=257)
        result = ax.solve_demand(agent, binomial, 0.99)
        assert scan.grid.min() < result.theta_star < scan.grid.max()
        step = ax.grid_step_near(scan, result.theta_star)
        assert abs(scan.best("long")[0] - result.theta_star) <= 2 * step


class TestFiniteDifferences:
    def test_first_order_matches_analytic(self, binomial):
        rng = np.random.default_rng(41)
        agent = make_agent("power", 2.0, prior=(0.75, 0.25))
        for _ in range(25):
            theta = float(rng.uniform(0.1, 3.0)) * (1.0 if rng.uniform() < 0.5 else -1.0)
            price = float(rng.uniform(0.94, 1.06))
            fd = ax.finite_difference_derivative(agent, binomial, theta, order=1,
                                                 h=1e-5, price=price)
            an = ax.derivative(agent, binomial, theta, price=price)
            assert fd == pytest.approx(an, abs=1e-6)

    def test_second_order_matches_analytic(self, binomial):
        agent = make_agent("log", prior=(0.4, 0.6), alpha=0.8, c=1.02)
        for theta in (0.5, 1.5, -0.5, -1.5):
            fd = ax.finite_difference_derivative(agent, binomial, theta, order=2,
                                                 h=1e-4, price=0.99)
            an = ax.second_derivative(agent, binomial, theta, price=0.99)
            assert fd == pytest.approx(an, rel=1e-4, abs=1e-6)

    def test_averse_concavity_everywhere_sampled(self, binomial):
        agent = make_agent("power", 2.0, prior=(0.75, 0.25), alpha=0.9)
        for theta in np.linspace(-5, 5, 21):
            if abs(theta) < 0.2:
                continue
            d2 = ax.finite_difference_derivative(agent, binomial, theta, order=2,
                                                 h=1e-4, price=1.0)
            assert d2 < 0.0

    def test_seeker_concave_per_side(self, binomial):
        agent = make_agent("log", prior=(0.5, 0.5), c=1.01, alpha=0.25)
        for theta in (0.25, 1.0, 3.0, -0.25, -1.0, -3.0):
            d2 = ax.finite_difference_derivative(agent, binomial, theta, order=2,
                                                 h=1e-4, price=1.0)
            assert d2 < 0.0

    def test_kink_guards(self, binomial):
        agent = make_agent("power", 2.0, prior=(0.75, 0.25))
        with pytest.raises(ax.DomainError):
            ax.finite_difference_derivative(agent, binomial, 0.0)
        with pytest.raises(ax.DomainError):
            ax.finite_difference_derivative(agent, binomial, 1e-8, h=1e-6)
        with pytest.raises(ax.DomainError):
            ax.finite_difference_derivative(agent, binomial, 1.0, h=1e-320)

    def test_quadratic_analytic_derivatives(self, binomial):
        # the state-dependent kind runs through the same derivative formulas
        agent = make_agent("quadratic_quasilinear", 2.0, prior=(0.25, 0.75), alpha=0.75)
        for theta in (0.4, -0.7):
            fd = ax.finite_difference_derivative(agent, binomial, theta, order=1, h=1e-6)
            an = ax.derivative(agent, binomial, theta)
            assert fd == pytest.approx(an, abs=1e-6)
            fd2 = ax.finite_difference_derivative(agent, binomial, theta, order=2, h=1e-4)
            an2 = ax.second_derivative(agent, binomial, theta)
            assert fd2 == pytest.approx(an2, rel=1e-4, abs=1e-6)
