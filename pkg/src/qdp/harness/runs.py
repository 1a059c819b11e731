"""Shared building blocks for the CLI, the design runner and the acceptance tests."""
import time
from dataclasses import dataclass

import numpy as np

from qdp.errors import ConfigError
from qdp.nlmdp.schemes import expected_total_reward, forward_marginals
from qdp.policy.optimizer import to_pure_policy, train
from qdp.pricing.model import PricingModel

COMPONENTS = ("revenue", "waiting", "terminal", "penalty")


def parse_blocks(text):
    """'0-10,11-15' -> [(0, 10), (11, 15)]."""
    out = []
    for part in text.split(","):
        lo, _, hi = part.strip().partition("-")
        try:
            out.append((int(lo), int(hi or lo)))
        except ValueError as exc:
            raise ConfigError(f"bad count block {part!r}") from exc
    return out


def sharing_from_blocks(blocks, horizon):
    ts = tuple(range(horizon))
    return tuple((tuple(range(lo, hi + 1)), ts) for lo, hi in blocks)


def qplex_value(model, policy):
    """QPLEX decomposition of a policy, together with its forward marginals."""
    trace = forward_marginals(model, policy, model.initial_marginal())
    return expected_total_reward(model, policy, trace), trace


def components_of(dec):
    c = dec.component_totals()
    return {k: float(c.get(k, 0.0)) for k in COMPONENTS}


@dataclass
class TrainOutcome:
    model: PricingModel
    trace: object          # TrainTrace
    pure: object           # pure PartitionedPolicy
    pure_value: object     # RewardDecomposition of the pure policy
    wall_time: float

    @property
    def actions(self):
        return self.pure.pure_actions()


def train_qdp(spec, eta, epsilon=1e-6, max_episodes=10_000, adaptive=False, sharing=None,
              snapshot_every=None, callback=None):
    model = PricingModel(spec)
    t0 = time.perf_counter()
    tr = train(model, model.uniform_policy(sharing), eta, epsilon=epsilon,
               max_episodes=max_episodes, adaptive=adaptive, snapshot_every=snapshot_every,
               callback=callback)
    pure = to_pure_policy(tr.policy)
    dec, _ = qplex_value(model, pure)
    return TrainOutcome(model, tr, pure, dec, time.perf_counter() - t0)


def trace_rows(trace):
    rows = []
    for r in trace.records:
        row = {"episode": r.episode, "J": r.J, "stopping_stat": r.stopping_stat,
               "eta_effective": r.eta_effective, "accepted": r.accepted}
        row.update({k: float(r.components.get(k, 0.0)) for k in COMPONENTS})
        rows.append(row)
    return rows


def marginal_rows(spec, trace):
    mz = np.asarray(trace.mu).reshape(len(trace.mu), spec.n_counters, spec.n_labels).sum(axis=2)
    return [{"t": t, "z": z, "mass": float(mz[t, z])}
            for t in range(mz.shape[0]) for z in range(mz.shape[1])]
