"""Path entropy and entropy rates of linear compartmental systems in equilibrium."""

from .chain import (
    ChainStats,
    chain_stats,
    entry_distribution,
    exit_pool_distribution,
    expected_jumps,
    expected_visits,
    jump_probabilities,
    mean_occupation_times,
    mean_transit_time,
    transit_time_density,
)
from .entropy import (
    Decomposition,
    EntropyReport,
    OnePool,
    discrete_entropy,
    entropy_rate_per_jump,
    entropy_rate_per_time,
    entropy_report,
    exponential_entropy,
    one_pool_equivalent,
    path_entropy,
    path_entropy_decomposition,
    poisson_entropy_rate,
)
from .errors import (
    EmptyFeasibleSetError,
    InvalidSystemError,
    NegativeSteadyStateError,
    NonpositiveTargetError,
    PathEntropyError,
    SingularMatrixError,
)
from .maxent import (
    GammaConstraints,
    IdentificationResult,
    SteadyStateConstraintProblem,
    TransitConstraintProblem,
    feasible_interval,
    identify,
    maxent_fixed_steady_state,
    maxent_fixed_transit,
    maxent_steady_state_dual,
    objective,
)
from .models import emanuel, table1_systems, wang
from .sampler import estimate, log_path_density, sample_path, simulate_paths
from .system import CompartmentalSystem, SteadyState, ValidationReport, steady_state, validate

__version__ = "0.1.0"
