"""Discrete-event Monte Carlo validation of pricing policies."""
from qdp.sim.des import SimResult, estimate_violations, simulate_policy
from qdp.sim.search import exhaustive_restricted

__all__ = ["SimResult", "estimate_violations", "exhaustive_restricted", "simulate_policy"]
