"""Temperature-shaped policy-gradient objectives on tiny verifiable-reward tasks.

The package pairs sampled estimators (GRPO, tempered REINFORCE regularizers,
the double-importance-sampled DCPO objective and its ablations) with exact
enumeration oracles, so every claim about an estimator can be checked against
ground truth on a response space small enough to list.
"""

from .objectives import KINDS, GradientEstimate, ObjectiveSpec, objective_gradient
from .policy import Context, Keying, PolicyParams, Vocab
from .rollout import RolloutGroup, Trajectory, group_advantages, sample_group
from .tasks import Task, builtin_tasks, get_task, reward
from .trainer import MetricsRecord, TrainConfig, detect_collapse, train

__all__ = [
    "KINDS", "GradientEstimate", "ObjectiveSpec", "objective_gradient",
    "Context", "Keying", "PolicyParams", "Vocab",
    "RolloutGroup", "Trajectory", "group_advantages", "sample_group",
    "Task", "builtin_tasks", "get_task", "reward",
    "MetricsRecord", "TrainConfig", "detect_collapse", "train",
]
