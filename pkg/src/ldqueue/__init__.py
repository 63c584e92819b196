"""Infinite-server queue surfaces, their large-deviations rate
functionals, and most-likely-path solvers for overflow and ruin."""

from .errors import (
    BracketError,
    ConfigError,
    DomainError,
    GridError,
    InfeasibleError,
    InsufficientHitsError,
    LdqueueError,
    PartitionError,
    RangeError,
)
from .laws import (
    RenewalLaw,
    ServiceLaw,
    deterministic_interarrivals,
    deterministic_service,
    exponential_interarrivals,
    exponential_service,
    gamma_interarrivals,
    integrated_tail,
    renewal_from_spec,
    service_from_spec,
    service_truncate,
    uniform_interarrivals,
    uniform_service,
)
from .psi import (
    PsiEvaluator,
    cumulant,
    psi_n,
    psi_n_truncated,
    truncated_cumulant,
    truncated_evaluator,
)
from .rates import (
    INFINITE,
    IncrementTable,
    RateResult,
    TiltDensity,
    cell_masses,
    finite_dim_objective,
    finite_dim_rate,
    finite_dim_rate_detailed,
    increments_from_function,
    increments_from_surface,
    lln_tilt,
    phi_truncate,
    poisson_rate,
    qbar_from_tilt,
    surface_from_tilt,
    truncated_rate,
)
from .simulate import (
    EventLog,
    OccupancySurface,
    SurfaceGrid,
    aggregate_loss,
    build_surface,
    counting_processes,
    residual_view,
    simulate,
    stream,
    truncate_events,
)
from .solvers import (
    OptimalPath,
    OverflowProblem,
    RuinProblem,
    insurance_surface,
    local_optimality_gap,
    multiplier_equation_G,
    overflow_surface,
    solve_overflow,
    solve_ruin,
    whole_life_payoffs,
)
from .verify import (
    DecayEstimate,
    QueueLevelEvent,
    TailOracleResult,
    decay_curve,
    marginal_distribution_check,
    nested_partitions,
    poisson_tail_log,
    poisson_tail_oracle,
    rate_cross_check,
)

__version__ = "0.1.0"
