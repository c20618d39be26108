"""Contextual combinatorial semi-bandits with sparse rewards.

PAC learning via a Frank-Wolfe log-barrier exploration design, adversarial
regret minimization via FTRL with entropy plus log-barrier regularization,
exact-expectation oracles for small instances, and a seeded experiment harness.
"""
from .core import (
    ActionSubset,
    ContractViolation,
    Policy,
    PolicyClass,
    RewardVector,
    SemiBanditFeedback,
    SimplexWeights,
    sample_mixed_action,
    sample_uniform_action,
)
from .environments import (
    Instance,
    LowerBoundSpec,
    exact_gap_to_best,
    exact_policy_rewards,
    lower_bound_instance,
    planted_gap_instance,
    random_sparse_instance,
)
from .fw_objective import (
    LogBarrierObjective,
    Phase1Batch,
    Phase1Record,
    empirical_gradient,
    empirical_objective,
    exact_population_objective,
    frank_wolfe,
)
from .harness import ExperimentConfig, SweepResult, run_experiment, sparsity_sweep
from .oracle import WeightedExample, erm, loo
from .pac import PacConfig, PacReport, pac_comband, pac_single_label
from .regret import exp4_comb_sparse, exp4_entropy_baseline, ftrl_solve, solve_ftrl

__version__ = "0.1.0"

__all__ = [
    "ActionSubset",
    "ContractViolation",
    "Policy",
    "PolicyClass",
    "RewardVector",
    "SemiBanditFeedback",
    "SimplexWeights",
    "sample_mixed_action",
    "sample_uniform_action",
    "Instance",
    "LowerBoundSpec",
    "exact_gap_to_best",
    "exact_policy_rewards",
    "lower_bound_instance",
    "planted_gap_instance",
    "random_sparse_instance",
    "LogBarrierObjective",
    "Phase1Batch",
    "Phase1Record",
    "empirical_gradient",
    "empirical_objective",
    "exact_population_objective",
    "frank_wolfe",
    "ExperimentConfig",
    "SweepResult",
    "run_experiment",
    "sparsity_sweep",
    "WeightedExample",
    "erm",
    "loo",
    "PacConfig",
    "PacReport",
    "pac_comband",
    "pac_single_label",
    "exp4_comb_sparse",
    "exp4_entropy_baseline",
    "ftrl_solve",
    "solve_ftrl",
]
