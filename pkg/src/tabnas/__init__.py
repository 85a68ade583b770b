"""Resource-constrained architecture search for feedforward networks on tabular data."""

from .errors import (
    ConfigError,
    EmptyFeasibleSet,
    EnumerationTooLarge,
    NonFiniteError,
    SelectionFailed,
    TableError,
    TabNASError,
    ValidationError,
)
from .space import (
    ENUMERATION_LIMIT,
    UNBOUNDED,
    ResourceConstraint,
    SearchSpace,
    enumerate_feasible,
    param_count,
    pareto_front,
)
from .policy import PolicyState, adam_step, most_probable, probabilities, sample
from .rewards import (
    RewardSpec,
    exact_valid_prob,
    mc_estimate_valid_prob,
    rejection_objective,
    reinforce_objective,
    shaped_reward,
)
from .supernet import (
    SuperNet,
    TrainHyper,
    WarmupSchedule,
    child_backward,
    child_forward,
    standalone_train,
    train_supernet,
)
from .oracle import LossTable, SyntheticSpec, evaluate, export_table, import_table, synthesize, toy_example
from .search import RunLog, SearchConfig, SelectionConfig, replica_rl_step, run_search, select_final

__all__ = [
    "ConfigError",
    "EmptyFeasibleSet",
    "EnumerationTooLarge",
    "NonFiniteError",
    "SelectionFailed",
    "TableError",
    "TabNASError",
    "ValidationError",
    "ENUMERATION_LIMIT",
    "UNBOUNDED",
    "ResourceConstraint",
    "SearchSpace",
    "enumerate_feasible",
    "param_count",
    "pareto_front",
    "PolicyState",
    "adam_step",
    "most_probable",
    "probabilities",
    "sample",
    "RewardSpec",
    "exact_valid_prob",
    "mc_estimate_valid_prob",
    "rejection_objective",
    "reinforce_objective",
    "shaped_reward",
    "SuperNet",
    "TrainHyper",
    "WarmupSchedule",
    "child_backward",
    "child_forward",
    "standalone_train",
    "train_supernet",
    "LossTable",
    "SyntheticSpec",
    "evaluate",
    "export_table",
    "import_table",
    "synthesize",
    "toy_example",
    "RunLog",
    "SearchConfig",
    "SelectionConfig",
    "replica_rl_step",
    "run_search",
    "select_final",
]

__version__ = "0.1.0"
