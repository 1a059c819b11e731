"""State-aggregated tabular Q-learning over (t, z).

Full-information trajectories come from the simulator with uniformly
random prices (epsilon = 1, pure exploration). Since the behaviour policy
does not depend on the Q-table, every learning rate is trained on the same
sampled trajectories. The greedy count policy of each table is scored by
simulation on a separate random stream.
"""
import csv
from dataclasses import dataclass, field

import numba
import numpy as np

from qdp.sim.des import BLOCK, block_rng, run_block, simulate_policy

TRAIN_STREAM = 11
EVAL_STREAM = 12


@numba.njit(cache=True)
def _td_sweep(q, zs, acts, rews, c_T, alpha):
    """Constant-rate TD along each trajectory; q has shape (T, Z, A)."""
    reps, T = acts.shape
    for r in range(reps):
        for t in range(T):
            z = zs[r, t]
            a = acts[r, t]
            zn = zs[r, t + 1]
            if t + 1 < T:
                nxt = q[t + 1, zn, 0]
                for b in range(1, q.shape[2]):
                    if q[t + 1, zn, b] > nxt:
                        nxt = q[t + 1, zn, b]
            else:
                nxt = -c_T * zn
            q[t, z, a] += alpha * (rews[r, t] + nxt - q[t, z, a])


def td_update(q, zs, acts, rews, c_T, alpha):
    _td_sweep(q, np.ascontiguousarray(zs, dtype=np.int64),
              np.ascontiguousarray(acts, dtype=np.int64), np.ascontiguousarray(rews), float(c_T),
              float(alpha))
    return q


def greedy_actions(q):
    return np.argmax(q, axis=2)


@dataclass
class QLearnResult:
    rates: tuple
    curves: list = field(default_factory=list)   # rows (episode, rate, value, ci)
    tables: dict = field(default_factory=dict)
    best_rate: float = None
    best_value: float = -np.inf
    best_actions: np.ndarray = None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "rate", "value_estimate", "ci_halfwidth"])
            for row in self.curves:
                w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])


def _explore(n_actions):
    def choose(t, z, rng):
        return rng.integers(0, n_actions, size=z.shape[0])
    return choose


def qlearn_aggregated(spec, rates, episodes, eval_every, eval_reps, seed, threads=1):
    """Train one Q-table per learning rate on shared exploratory episodes.

    Every ``eval_every`` episodes (rounded up to whole blocks of the
    simulator) each greedy policy is simulated with ``eval_reps``
    replications. The best checkpoint over all rates is kept.
    """
    if spec.penalty.C > 0:
        raise ValueError("Q-learning baseline takes no distribution penalty")
    T, Z, A = spec.horizon, spec.n_counters, spec.n_actions
    res = QLearnResult(tuple(rates))
    qs = {r: np.zeros((T, Z, A)) for r in rates}
    choose = _explore(A)
    done, block, next_eval = 0, 0, eval_every
    while done < episodes:
        size = min(BLOCK, episodes - done)
        _, _, (zs, acts, rews) = run_block(spec, choose, size, block_rng(seed, block, TRAIN_STREAM),
                                           record=True)
        for r in rates:
            td_update(qs[r], zs, acts, rews, spec.c_T, r)
        done += size
        block += 1
        if done >= next_eval or done == episodes:
            for r in rates:
                acts_r = greedy_actions(qs[r])
                sim = simulate_policy(spec, acts_r, eval_reps, seed + EVAL_STREAM, threads)
                res.curves.append((done, r, sim.mean_reward, sim.ci_halfwidth))
                if sim.mean_reward > res.best_value:
                    res.best_value, res.best_rate, res.best_actions = sim.mean_reward, r, acts_r
            next_eval = (done // eval_every + 1) * eval_every
    res.tables = qs
    return res
