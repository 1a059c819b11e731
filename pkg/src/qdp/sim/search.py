"""Exhaustive simulation over block-constant count policies."""
import itertools
from dataclasses import dataclass, replace

import numpy as np

from qdp.errors import ConfigError, ResourceGuardError
from qdp.sim.des import simulate_policy

CANDIDATE_GUARD = 1e5


@dataclass(frozen=True)
class Candidate:
    prices: tuple
    mean: float
    ci_halfwidth: float
    max_violation: float
    feasible: bool
    reps: int


def block_actions(spec, blocks, price_indices):
    """(T, Z) action table posting price_indices[i] on counters in blocks[i]."""
    actions = np.empty(spec.n_counters, dtype=int)
    for (lo, hi), a in zip(blocks, price_indices):
        actions[lo:hi + 1] = a
    return np.tile(actions, (spec.horizon, 1))


def _check_blocks(spec, blocks):
    covered = np.zeros(spec.n_counters, dtype=int)
    for lo, hi in blocks:
        covered[lo:hi + 1] += 1
    if np.any(covered != 1):
        raise ConfigError("count blocks must partition 0..n+b")


def exhaustive_restricted(spec, blocks, price_subset, reps, seed, top_k=6, top_reps=None,
                          threads=1, guard=CANDIDATE_GUARD):
    """Simulate every block-constant policy; rank the feasible ones by mean reward.

    ``price_subset`` lists prices (values from ``spec.prices``). Feasibility
    means every per-period violation estimate is at most alpha. The first
    ``top_k`` feasible candidates are re-simulated with ``top_reps``
    replications when given. Returns the full table, feasible first.
    """
    _check_blocks(spec, blocks)
    idx = [spec.prices.index(p) if p in spec.prices else None for p in price_subset]
    if None in idx:
        raise ConfigError("prices not on the grid", [p for p, i in zip(price_subset, idx) if i is None])
    count = len(idx) ** len(blocks)
    if count > guard:
        raise ResourceGuardError("restricted policy class", count, guard)
    alpha = spec.penalty.alpha
    rows = []
    for combo in itertools.product(range(len(idx)), repeat=len(blocks)):
        acts = block_actions(spec, blocks, [idx[c] for c in combo])
        res = simulate_policy(spec, acts, reps, seed, threads)
        rows.append(Candidate(tuple(price_subset[c] for c in combo), res.mean_reward,
                              res.ci_halfwidth, res.max_buffer_prob,
                              res.max_buffer_prob <= alpha, reps))
    rows.sort(key=lambda c: (not c.feasible, -c.mean))
    if top_reps:
        for i, c in enumerate(rows[:top_k]):
            if not c.feasible:
                break
            acts = block_actions(spec, blocks, [spec.prices.index(p) for p in c.prices])
            res = simulate_policy(spec, acts, top_reps, seed + 1, threads)
            rows[i] = replace(c, mean=res.mean_reward, ci_halfwidth=res.ci_halfwidth,
                              max_violation=res.max_buffer_prob,
                              feasible=res.max_buffer_prob <= alpha, reps=top_reps)
        head = sorted(rows[:top_k], key=lambda c: (not c.feasible, -c.mean))
        rows = head + rows[top_k:]
    return rows
