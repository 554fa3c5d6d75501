"""Certainty equivalents and the risk/ambiguity compensation split."""

import math

import numpy as np
import pytest

import ambimax as ax
from ambimax.ambiguity import mean_std, state_utilities
from conftest import make_agent


class TestCertaintyEquivalent:
    def test_zero_position_costs_nothing(self, binomial):
        for kind, gamma in (("power", 2.0), ("log", None), ("exponential", 1.5)):
            agent = make_agent(kind, gamma, prior=(0.25, 0.75), alpha=0.75)
            assert ax.certainty_equivalent(agent, binomial, 0.0) == pytest.approx(0.0, abs=1e-10)

    def test_neutral_exponential_is_classical(self, binomial):
        agent = make_agent("exponential", 2.0, prior=(0.25, 0.75), alpha=0.5)
        theta = 1.0
        payoff = binomial.single_payoffs()
        x = np.exp(-2.0 * theta * payoff)
        classical = -math.log(float(agent.prior.probs @ x)) / 2.0
        assert ax.certainty_equivalent(agent, binomial, theta) == pytest.approx(classical, abs=1e-10)
        assert ax.certainty_equivalent_exponential(agent, binomial, theta) == pytest.approx(
            classical, abs=1e-14
        )

    def test_bisection_matches_closed_form(self, binomial):
        rng = np.random.default_rng(31)
        for _ in range(20):
            agent = make_agent("exponential", float(rng.uniform(0.5, 3.0)),
                               prior=(0.25, 0.75), c=float(rng.uniform(1.0, 1.05)),
                               alpha=float(rng.uniform(0.0, 1.0)))
            theta = float(rng.uniform(-2.0, 2.0))
            nu_num = ax.certainty_equivalent(agent, binomial, theta)
            nu_cf = ax.certainty_equivalent_exponential(agent, binomial, theta)
            assert nu_num == pytest.approx(nu_cf, abs=1e-10)

    def test_aversion_lowers_the_bid(self, binomial):
        theta = 1.0
        values = [ax.certainty_equivalent(make_agent("exponential", 2.0, prior=(0.25, 0.75),
                                                     alpha=a), binomial, theta)
                  for a in (0.25, 0.5, 0.75)]
        assert values[0] > values[1] > values[2]

    def test_positive_domain_exhaustion(self, binomial):
        # mild curvature keeps utility bounded near zero wealth; with a large
        # enough position even the maximal admissible payment leaves the
        # buyer better off, so no indifference payment exists
        agent = make_agent("power", 0.5, prior=(0.25, 0.75), alpha=0.75)
        with pytest.raises(ax.DomainError):
            ax.certainty_equivalent(agent, binomial, 200.0)


class TestDecomposition:
    def test_neutral_agent_has_no_ambiguity_part(self, binomial):
        agent = make_agent("power", 2.0, prior=(0.25, 0.75), alpha=0.5)
        dec = ax.decompose_premium(agent, binomial, 0.8)
        assert dec.delta_comp == pytest.approx(0.0, abs=1e-14)
        assert dec.rho == pytest.approx(dec.epsilon, abs=1e-14)

    def test_seeker_is_paid_in_certainty_terms(self, binomial):
        agent = make_agent("power", 2.0, prior=(0.25, 0.75), alpha=0.25)
        dec = ax.decompose_premium(agent, binomial, 0.8)
        assert dec.delta_comp < 0.0

    def test_sign_follows_the_tilt(self, binomial):
        rng = np.random.default_rng(32)
        for _ in range(30):
            alpha = float(rng.uniform(0.0, 1.0))
            agent = make_agent("log", prior=(0.3, 0.7), c=1.02, alpha=alpha)
            theta = float(rng.uniform(0.1, 1.5)) * (1.0 if rng.uniform() < 0.5 else -1.0)
            dec = ax.decompose_premium(agent, binomial, theta)
            if alpha > 0.5:
                assert dec.delta_comp > 0.0
            elif alpha < 0.5:
                assert dec.delta_comp < 0.0
            else:
                assert dec.delta_comp == pytest.approx(0.0, abs=1e-14)

    def test_exponential_closed_form(self, binomial):
        rng = np.random.default_rng(33)
        for _ in range(20):
            agent = make_agent("exponential", float(rng.uniform(0.5, 3.0)),
                               prior=(0.25, 0.75), c=float(rng.uniform(1.0, 1.05)),
                               alpha=float(rng.uniform(0.0, 1.0)))
            theta = float(rng.uniform(-1.5, 1.5))
            dec = ax.decompose_premium(agent, binomial, theta)
            closed = ax.ambiguity_premium_exponential(agent, binomial, theta)
            assert dec.delta_comp == pytest.approx(closed, abs=1e-10)

    def test_identities_verified(self, binomial):
        for kind, gamma in (("power", 2.0), ("power", 0.5), ("log", None),
                            ("exponential", 2.0)):
            agent = make_agent(kind, gamma, prior=(0.25, 0.75), alpha=0.8)
            theta = 0.6
            dec = ax.decompose_premium(agent, binomial, theta)
            u = state_utilities(agent, binomial, theta)
            value = ax.value_alpha(agent, binomial, theta)
            eu = float(agent.prior.probs @ u)
            assert float(agent.utility.value(agent.w0 - dec.rho)) == pytest.approx(value, abs=1e-10)
            assert float(agent.utility.value(agent.w0 - dec.epsilon)) == pytest.approx(eu, abs=1e-10)
            # the gap identity ties the split to the tilt times the spread
            _, std = mean_std(agent.prior.probs, u)
            gap = float(agent.utility.value(agent.w0 - dec.epsilon)) - \
                float(agent.utility.value(agent.w0 - dec.rho))
            assert gap == pytest.approx(agent.delta * std, abs=1e-10)

    def test_exponential_part_ignores_wealth(self, binomial):
        for w0 in (0.5, 1.0, 4.0):
            agent = make_agent("exponential", 2.0, w0=w0, prior=(0.25, 0.75), alpha=0.75)
            dec = ax.decompose_premium(agent, binomial, 1.0)
            base = ax.decompose_premium(make_agent("exponential", 2.0, prior=(0.25, 0.75),
                                                   alpha=0.75), binomial, 1.0)
            assert dec.delta_comp == pytest.approx(base.delta_comp, abs=1e-12)

    def test_monotone_in_alpha(self, binomial):
        values = [ax.decompose_premium(make_agent("log", prior=(0.3, 0.7), c=1.02, alpha=a),
                                       binomial, 0.9).delta_comp
                  for a in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_quadratic_certainty_line(self, binomial):
        agent = make_agent("quadratic_quasilinear", 2.0, prior=(0.25, 0.75), alpha=0.75)
        dec = ax.decompose_premium(agent, binomial, 0.5)
        value = ax.value_alpha(agent, binomial, 0.5)
        assert agent.utility.certainty_value(agent.w0 - dec.rho) == pytest.approx(value, abs=1e-12)

    def test_out_of_range_inversion_reported(self, binomial):
        # gamma < 1 keeps power utility positive; a deep short position
        # pushes the value negative and the inverse has no preimage
        agent = make_agent("power", 0.5, w0=2.0, prior=(0.25, 0.75), alpha=0.75)
        with pytest.raises((ax.DomainError, ax.InadmissibleWealthError)):
            ax.decompose_premium(agent, binomial, -25.0)
