"""Generic finite-horizon nonlinear MDP engine."""
from qdp.nlmdp.fisher import FisherBlocks, fisher_blocks
from qdp.nlmdp.model import DenseModel, NonlinearModel
from qdp.nlmdp.oracles import enumerate_trajectories
from qdp.nlmdp.schemes import (
    MarginalsTrace,
    RewardDecomposition,
    SigmaTrace,
    backward_sigma,
    expected_total_reward,
    forward_marginals,
    policy_gradient,
    q_function,
)

__all__ = [
    "DenseModel", "FisherBlocks", "MarginalsTrace", "NonlinearModel", "RewardDecomposition",
    "SigmaTrace", "backward_sigma", "enumerate_trajectories", "expected_total_reward",
    "fisher_blocks", "forward_marginals", "policy_gradient", "q_function",
]
