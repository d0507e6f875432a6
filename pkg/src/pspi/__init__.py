"""Policy iteration with policy switching for finite discounted MDPs."""

from .errors import (
    EvaluationError,
    InvalidModelError,
    InvariantError,
    IterationLimitError,
    MonotonicityError,
)
from .fixtures import absorb2, det2
from .generators import generate_communicating_mdp, generate_random_mdp
from .mdp import (
    EPS_IMPROVE,
    AnalysisReport,
    MdpModel,
    analyze,
    bellman_backup,
    brute_force_optimal,
    evaluate_exact,
    evaluate_iterative,
    is_communicating,
    is_optimal,
    policy_backup,
    q_value,
    validate_model,
)
from .offline import (
    SolverConfig,
    build_delta,
    howard_pi,
    newton_pi,
    pspi_async,
    pspi_sync,
    simplex_pi,
)
from .online import (
    detect_stabilization,
    env_step,
    opi_step,
    pspi_step,
    pspi_step_extended,
    run_online,
    verify_local_optimality,
)
from .rollout import (
    RolloutConfig,
    RngStreamKey,
    estimate_value,
    racing_select,
    rollout_return,
    saa_select,
    truncation_horizon,
)
from .switching import (
    PolicySet,
    in_better_set,
    local_neighborhood,
    policy_switch,
    strictly_improves,
    verify_multi_policy_improvement,
)

__version__ = "0.1.0"
