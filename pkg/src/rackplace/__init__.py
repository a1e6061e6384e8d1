"""Rack placement optimization for heterogeneous data centers.

A library for placing racks of heterogeneous types onto positions grouped
into nested scopes, minimizing a weighted sum of rack movements,
fault-tolerance resource-spread metrics, and resource-limit penalties. The
solver runs a gradient-guided local search per rack type; the order of rack
types comes from a fixed order, random/exhaustive search, or a learned
attention policy trained with multi-start REINFORCE.
"""

from .model import (
    Assignment,
    ConstraintReport,
    ProblemInstance,
    SpreadRequirement,
    check_all,
    check_g1,
    check_g2,
    check_g3,
    validate_instance,
)
from .objective import (
    GradientField,
    ObjectiveBreakdown,
    augmented_objective,
    finite_difference_check,
    gradient,
    limit_penalty,
    movement_cost,
    scope_utilizations,
    spread_metric,
    total_utility,
)
from .heuristic import (
    EngineConfig,
    InfeasibleDemandError,
    SubproblemState,
    solve_ordered,
    solve_subproblem,
)
from .instgen import (
    GeneratorConfig,
    build_scope_hierarchy,
    generate_instance,
    sample_prior_mapping,
    validate_config,
)
from .oracle import OracleResult, SearchSpaceError, brute_force_solve, optimality_gap
from .ordering import exhaustive_order_search, featurize, random_order_baseline
from .fixtures import load_tiny_instance, tiny_instance

__version__ = "0.1.0"
