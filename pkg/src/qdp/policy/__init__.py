"""Partitioned tabular policies and the exponentiated Q-ascent optimizer."""
from qdp.policy.optimizer import (
    EpisodeRecord,
    QBarTable,
    TrainTrace,
    approx_natural_gradient,
    exp_q_update,
    local_opt_check,
    qbar,
    shared_update,
    stopping_stat,
    to_pure_policy,
    train,
)
from qdp.policy.tabular import PartitionedPolicy, identity_assignment

__all__ = [
    "EpisodeRecord", "PartitionedPolicy", "QBarTable", "TrainTrace", "approx_natural_gradient",
    "exp_q_update", "identity_assignment", "local_opt_check", "qbar", "shared_update",
    "stopping_stat", "to_pure_policy", "train",
]
