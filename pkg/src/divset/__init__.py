"""Diverse near-optimal policy sets for tabular MDPs.

Train a set of n policies that spread out in expected-feature space
while each keeps its value above a fraction alpha of the optimum. The
package provides exact (occupancy-solving) and sample-based trainers,
constraint strategies for the Lagrangian method and its fixed-mixture
baselines, environment builders with parametric perturbations, and a
few-shot robustness evaluation protocol.
"""

from .config import (
    ConfigError,
    EnvironmentSettings,
    ExperimentConfig,
    KShotMethod,
    KShotSettings,
    PerturbationSettings,
    SweepSettings,
    TrainerSettings,
    load_config,
    parse_config,
)
from .diversity import (
    DiversityConfig,
    DiversityKind,
    DiversityScore,
    FeatureSet,
    RewardScaling,
    diversity_reward,
    diversity_score,
    nearest_index,
    repulsive_objective,
    vdw_objective,
)
from .envs import (
    Always,
    FeatureKind,
    GridSpec,
    Periodic,
    Perturbation,
    PerturbationKind,
    PerturbedMdp,
    Schedule,
    UnreachableGoalError,
    base_states,
    build_chain,
    build_gridworld,
    four_rooms_spec,
    grid_cells,
    perturb,
)
from .experiment import (
    RunSpec,
    enumerate_runs,
    run_experiment,
    run_kshot,
    run_single,
)
from .kshot import (
    KShotConfig,
    KShotResult,
    bootstrap_ci,
    episode_return,
    kshot_evaluate,
    kshot_select,
)
from .mdp import (
    ConvergenceError,
    Criterion,
    InvalidMdpError,
    NonUnichainError,
    Occupancy,
    Policy,
    SuccessorFeatures,
    TabularMdp,
    best_response,
    deterministic_policy,
    discounted_occupancy,
    expected_features,
    mdp_from_json,
    mdp_to_json,
    occupancy,
    policy_transition_matrix,
    policy_value,
    random_policy,
    stationary_distribution,
    successor_features,
    uniform_policy,
    validate_mdp,
)
from .plotting import plot_qd
from .policy_set import (
    AdamState,
    MovingAverageConfig,
    PolicySet,
    combined_reward,
    constraint_indicator,
    init_set,
    lagrange_step,
    lagrange_step_adam,
    policy_set_from_json,
    policy_set_to_json,
    update_moving_averages,
)
from .seeding import child_rng, hash64
from .strategies import StrategyConfig, StrategyKind, mix
from .training import (
    ExactTrainConfig,
    FtlMode,
    SampleTrainConfig,
    TraceRecord,
    Trajectory,
    TrainingDivergedError,
    TrainTrace,
    rollout,
    train_exact,
    train_sampled,
)

__version__ = "0.1.0"
