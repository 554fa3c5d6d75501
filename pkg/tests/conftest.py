"""Shared fixtures and random-instance helpers for the test suite."""

import numpy as np
import pytest

from ambimax import (
    Agent,
    AmbiguitySpec,
    ReferencePrior,
    Scenario,
    UtilitySpec,
)


@pytest.fixture
def binomial():
    """Two-state desk scenario: payoffs 1.1/0.9, quoted at 1.0."""
    return Scenario(("g", "b"), [[1.1, 0.9]], [1.0])


@pytest.fixture
def trinomial():
    """Three-state desk scenario with prior mean exactly 1.0."""
    return Scenario(("lo", "mid", "hi"), [[0.5, 1.0, 1.1]], [1.0])


@pytest.fixture
def trinomial_prior():
    return ReferencePrior([0.05, 0.7, 0.25])


def make_agent(kind="power", gamma=2.0, w0=1.0, prior=(0.5, 0.5), c=1.01, alpha=0.75,
               endowment=None):
    if kind == "log":
        gamma = None
    return Agent(
        utility=UtilitySpec(kind, gamma),
        w0=w0,
        prior=ReferencePrior(list(prior)),
        ambiguity=AmbiguitySpec(c, alpha),
        endowment=endowment,
    )


def random_prior(rng, n):
    """Dirichlet draw blended toward uniform so no state is too small."""
    p = rng.dirichlet(np.ones(n) * 2.0) * 0.9 + 0.1 / n
    return p / p.sum()


def random_feasible_c(rng, prior, lo=0.05, hi=0.9):
    """Divergence budget strictly inside the prior's admissible range."""
    bound = 1.0 / (1.0 - float(np.min(prior)))
    return 1.0 + rng.uniform(lo, hi) * (bound - 1.0)


def random_inner_instance(rng, n_max=6):
    """(prior, c, utility values) passing the divergence bound."""
    n = int(rng.integers(2, n_max + 1))
    p = random_prior(rng, n)
    c = random_feasible_c(rng, p)
    u = rng.normal(size=n)
    return ReferencePrior(p), c, u
