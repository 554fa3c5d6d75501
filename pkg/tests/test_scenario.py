"""Domain-type invariants and the wealth/bounds/divergence operations."""

import math

import numpy as np
import pytest

import ambimax as ax
from conftest import make_agent


class TestDistribution:
    def test_rejects_negative_entries(self):
        with pytest.raises(ax.DomainError):
            ax.Distribution([-0.1, 1.1])

    def test_rejects_bad_sum(self):
        with pytest.raises(ax.DomainError):
            ax.Distribution([0.5, 0.5 + 1e-9])

    def test_accepts_tiny_roundoff(self):
        ax.Distribution([0.3, 0.7 + 1e-15])

    def test_divergence_of_prior_is_one(self):
        prior = ax.ReferencePrior([0.25, 0.75])
        assert prior.dist.divergence(prior) == pytest.approx(1.0, abs=1e-14)


class TestReferencePrior:
    def test_rejects_zero_mass(self):
        with pytest.raises(ax.DomainError):
            ax.ReferencePrior([0.0, 1.0])

    def test_accepts_plain_lists(self):
        assert len(ax.ReferencePrior([0.1, 0.9])) == 2


class TestAmbiguitySpec:
    def test_parameter_validation(self):
        with pytest.raises(ax.DomainError):
            ax.AmbiguitySpec(0.99, 0.5)
        with pytest.raises(ax.DomainError):
            ax.AmbiguitySpec(1.01, 1.5)

    def test_derived_quantities(self):
        spec = ax.AmbiguitySpec(1.01, 0.75)
        assert spec.d == pytest.approx(0.01)
        assert spec.delta == pytest.approx(0.05)
        assert spec.d_reduced == pytest.approx(0.0025)

    def test_reduced_budget_relations(self):
        # never exceeds d; equals d at alpha = 0; vanishes at alpha = 1/2
        for c in (1.0, 1.01, 1.3):
            d = c - 1.0
            assert ax.AmbiguitySpec(c, 0.0).d_reduced == pytest.approx(d)
            assert ax.AmbiguitySpec(c, 0.5).d_reduced == pytest.approx(0.0)
            for alpha in (0.1, 0.3, 0.7, 1.0):
                assert ax.AmbiguitySpec(c, alpha).d_reduced <= d + 1e-15

    def test_tilt_monotone_and_antisymmetric_in_alpha(self):
        alphas = np.linspace(0.0, 1.0, 11)
        deltas = [ax.AmbiguitySpec(1.05, a).delta for a in alphas]
        assert all(b > a for a, b in zip(deltas, deltas[1:]))
        for a in alphas:
            assert ax.AmbiguitySpec(1.05, 1.0 - a).delta == pytest.approx(
                -ax.AmbiguitySpec(1.05, a).delta, abs=1e-15
            )

    def test_tilt_below_one_whenever_bound_holds(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            p = rng.dirichlet(np.ones(n)) * 0.9 + 0.1 / n
            p = p / p.sum()
            prior = ax.ReferencePrior(p)
            bound = 1.0 / (1.0 - p.min())
            spec = ax.AmbiguitySpec(1.0 + rng.uniform(0, 1) * (bound - 1) * 0.999,
                                    rng.uniform(0, 1))
            if ax.check_divergence_bound(prior, spec).ok:
                assert abs(spec.delta) < 1.0


class TestUtilitySpec:
    def test_kind_validation(self):
        with pytest.raises(ax.DomainError):
            ax.UtilitySpec("cubic", 1.0)
        with pytest.raises(ax.DomainError):
            ax.UtilitySpec("power")  # gamma required
        with pytest.raises(ax.DomainError):
            ax.UtilitySpec("log", 2.0)  # log takes no gamma

    def test_domains_and_inada(self):
        assert ax.UtilitySpec("power", 2.0).positive_domain
        assert ax.UtilitySpec("log").positive_domain
        assert not ax.UtilitySpec("exponential", 1.0).positive_domain
        assert ax.UtilitySpec("exponential", 1.0).satisfies_inada
        assert not ax.UtilitySpec("quadratic_quasilinear", 1.0).satisfies_inada

    @pytest.mark.parametrize("kind,gamma", [("power", 2.0), ("power", 0.5),
                                            ("log", None), ("exponential", 1.5)])
    def test_inverse_roundtrip(self, kind, gamma):
        u = ax.UtilitySpec(kind, gamma)
        for w in (0.3, 1.0, 2.7):
            assert u.inverse(float(u.value(w))) == pytest.approx(w, rel=1e-12)

    def test_inverse_range_checks(self):
        with pytest.raises(ax.DomainError):
            ax.UtilitySpec("exponential", 1.0).inverse(0.5)
        with pytest.raises(ax.DomainError):
            ax.UtilitySpec("power", 2.0).inverse(1.0)

    def test_power_gamma_one_is_log(self):
        u = ax.UtilitySpec("power", 1.0)
        assert float(u.value(2.0)) == pytest.approx(math.log(2.0))


class TestScenario:
    def test_needs_two_states(self):
        with pytest.raises(ax.DomainError):
            ax.Scenario(("only",), [[1.0]], [1.0])

    def test_rejects_constant_payoff_asset(self):
        with pytest.raises(ax.DomainError):
            ax.Scenario(("a", "b"), [[1.0, 1.0]], [1.0])

    def test_rejects_dependent_rows(self):
        with pytest.raises(ax.DomainError):
            ax.Scenario(("a", "b", "c"), [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]], [1.0, 2.0])

    def test_dimension_checks(self):
        with pytest.raises(ax.DimensionMismatchError):
            ax.Scenario(("a", "b"), [[1.0, 2.0]], [1.0, 2.0])

    def test_interior_price_guard(self, binomial):
        with pytest.raises(ax.PriceBoundsError):
            binomial.require_interior_price(1.2)
        with pytest.raises(ax.PriceBoundsError):
            binomial.with_price(0.9).require_interior_price()
        assert binomial.require_interior_price() == 1.0

    def test_with_price_is_a_copy(self, binomial):
        other = binomial.with_price(0.95)
        assert other.price == 0.95
        assert binomial.price == 1.0


class TestWealthProfile:
    def test_zero_position_gives_constant_wealth(self, binomial):
        agent = make_agent()
        profile = ax.wealth_profile(agent, binomial, 0.0)
        assert np.allclose(profile.wealth, agent.w0)
        assert profile.admissible

    def test_hand_evaluated_profile(self, binomial):
        agent = make_agent()
        profile = ax.wealth_profile(agent, binomial, 2.0)
        assert np.allclose(profile.wealth, [1.2, 0.8])

    def test_inadmissible_when_wealth_goes_negative(self, binomial):
        agent = make_agent()  # power utility, w0 = 1
        profile = ax.wealth_profile(agent, binomial, 11.0)
        assert not profile.admissible  # bad state: 1 + 11*(-0.1) = -0.1

    def test_dimension_mismatch(self, binomial):
        agent = make_agent(prior=(0.2, 0.3, 0.5))
        with pytest.raises(ax.DimensionMismatchError):
            ax.wealth_profile(agent, binomial, 1.0)

    def test_endowment_enters_wealth(self, binomial):
        agent = make_agent(endowment=[0.5, 0.0])
        profile = ax.wealth_profile(agent, binomial, 0.0)
        assert np.allclose(profile.wealth, [1.5, 1.0])


class TestAdmissibleBounds:
    def test_full_line_for_exponential(self, binomial):
        agent = make_agent("exponential", 1.0)
        assert ax.admissible_bounds(agent, binomial) == (-math.inf, math.inf)

    def test_power_box(self, binomial):
        agent = make_agent()
        lo, hi = ax.admissible_bounds(agent, binomial)
        assert lo == pytest.approx(-10.0)
        assert hi == pytest.approx(10.0)

    def test_scaling_in_initial_wealth(self, binomial):
        agent = make_agent(w0=2.0)
        lo, hi = ax.admissible_bounds(agent, binomial)
        assert (lo, hi) == pytest.approx((-20.0, 20.0))

    def test_bounds_move_monotonically_with_price(self, binomial):
        # the long cap tightens and the short cap loosens as the price rises:
        # both are decreasing in price
        agent = make_agent()
        prices = [0.92, 0.97, 1.03, 1.08]
        bounds = [ax.admissible_bounds(agent, binomial, price=p) for p in prices]
        highs = [b[1] for b in bounds]
        lows = [b[0] for b in bounds]
        assert all(b < a for a, b in zip(highs, highs[1:]))
        assert all(b < a for a, b in zip(lows, lows[1:]))

    def test_price_outside_interval_raises(self, binomial):
        agent = make_agent()
        with pytest.raises(ax.PriceBoundsError):
            ax.admissible_bounds(agent, binomial, price=1.5)


class TestDivergenceBound:
    def test_uniform_two_state(self):
        prior = ax.ReferencePrior([0.5, 0.5])
        check = ax.check_divergence_bound(prior, ax.AmbiguitySpec(1.01, 0.5))
        assert check.ok
        assert check.bound == pytest.approx(2.0)

    def test_trinomial_figure_prior(self):
        prior = ax.ReferencePrior([0.05, 0.7, 0.25])
        check = ax.check_divergence_bound(prior, ax.AmbiguitySpec(1.01, 0.25))
        assert check.ok
        assert check.bound == pytest.approx(1.0 / 0.95)

    def test_budget_too_large(self):
        prior = ax.ReferencePrior([0.5, 0.5])
        check = ax.check_divergence_bound(prior, ax.AmbiguitySpec(2.5, 0.5))
        assert not check.ok
        assert check.margin == pytest.approx(-0.5)


class TestAgent:
    def test_positive_wealth_required_for_power(self):
        with pytest.raises(ax.DomainError):
            make_agent(w0=-1.0)

    def test_exponential_allows_any_wealth(self):
        make_agent("exponential", 1.0, w0=-5.0)

    def test_with_alpha_copy(self):
        agent = make_agent(alpha=0.75)
        other = agent.with_alpha(0.6)
        assert other.ambiguity.alpha == 0.6
        assert agent.ambiguity.alpha == 0.75
