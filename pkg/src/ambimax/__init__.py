"""Alpha-maxmin portfolio choice over finite state spaces with
quadratic-divergence ambiguity sets: closed-form extremal beliefs, demand
functions with reservation intervals, seeker algorithms, market-clearing
equilibria, and compensation decompositions."""

__version__ = "0.1.0"

from .ambiguity import (
    InnerSolution,
    check_tilting_bounds,
    quadratic_moment_value,
    state_utilities,
    stochastic_dominance_check,
    value_alpha,
    value_alpha_of_wealth,
    worst_best_closed_form,
    worst_best_oracle,
    worst_best_with_state_exclusion,
)
from .demand import (
    ComparativeStaticsReport,
    DemandResult,
    ReservationBounds,
    comparative_statics_alpha,
    demand_curve,
    derivative,
    martingale_measure,
    one_sided_derivatives_at_zero,
    reservation_interval,
    second_derivative,
    solve_demand,
    solve_demand_with_endowment,
)
from .equilibrium import (
    EquilibriumResult,
    Market,
    RiskShareResult,
    exponential_risk_sharing,
    first_best_equilibrium,
    local_second_best,
    no_trade_despite_disjoint_intervals,
    nontriviality_condition,
    second_best_equilibrium,
    sharpe_condition,
)
from .errors import (
    AmbimaxError,
    BracketError,
    ConvergenceError,
    DimensionMismatchError,
    DivergenceBoundError,
    DomainError,
    InadmissibleWealthError,
    NegativeProbabilityError,
    PriceBoundsError,
)
from .premium import (
    PremiumDecomposition,
    ambiguity_premium_exponential,
    certainty_equivalent,
    certainty_equivalent_exponential,
    decompose_premium,
)
from .scan import GridScan, finite_difference_derivative, grid_step_near, value_scan
from .scenario import (
    Agent,
    AmbiguitySpec,
    Distribution,
    ReferencePrior,
    Scenario,
    UtilitySpec,
    WealthProfile,
    admissible_bounds,
    check_divergence_bound,
    wealth_profile,
)
from .seeker import (
    AlternatingResult,
    DiscontinuityProbe,
    LocalOptimum,
    SeekerDemand,
    alternating_maximization,
    binomial_seeker_demand,
    binomial_sign_measures,
    discontinuity_probe,
    seeker_demand,
)

__all__ = [name for name in dir() if not name.startswith("_")]
