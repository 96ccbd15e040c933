"""Tabular FairDICE: offline multi-objective RL with alpha-fair welfare and f-divergence regularization."""

from .data import (
    EmpiricalEstimates,
    OfflineDataset,
    empirical_estimates,
    estimates_for,
    load_dataset,
    mixture_policy_for_optimality,
    optimal_scalar_policy,
    sample_trajectories,
    save_dataset,
)
from .environments import (
    FourRoomConfig,
    RandomMOMDPConfig,
    build_four_room,
    build_four_room_env,
    build_random_momdp,
)
from .evaluation import divergence_report, evaluate_policy, monte_carlo_returns
from .momdp import (
    MOMDP,
    augment_absorbing,
    bandit,
    bellman_flow_residual,
    load_momdp,
    occupancy_returns,
    policy_from_occupancy,
    policy_occupancy,
    save_momdp,
    uniform_policy,
    validate_momdp,
    validate_policy,
)
from .oracle import PrimalProblem, PrimalResult, solve_primal
from .scalarization import WelfareMetrics, welfare_metrics
from .solver import (
    DualSolution,
    InfeasibleSupportError,
    SolverConfig,
    dual_gradients,
    dual_loss,
    solve,
    solve_fixed,
)

__version__ = "0.1.0"
