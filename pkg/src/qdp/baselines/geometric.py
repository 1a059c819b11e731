"""Exact count-only MDP for (truncated) geometric service.

With memoryless service every in-service customer completes in a period
with the same probability p, so the counter z alone is Markov:
d ~ Binomial(min(z, n), p) departures, then Poisson arrivals admitted up
to n + b + d - z. The completion probability is taken as g(1), the
one-period completion probability of the truncated pmf.
"""
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from qdp.errors import UnsupportedModelError
from qdp.pricing.components import poisson_tables


@dataclass(frozen=True, eq=False)
class CountSolution:
    values: np.ndarray   # (T+1, Z)
    actions: np.ndarray  # (T, Z)
    value: float


class GeometricCountModel:
    """Count MDP on z = 0..n+b with per-customer completion probability p."""

    def __init__(self, spec, p=None):
        if spec.penalty.C > 0:
            raise UnsupportedModelError("the count MDP has no marginal-dependent penalty")
        self.spec = spec
        self.p = float(spec.g[0] if p is None else p)
        N, n = spec.capacity, spec.n
        z = np.arange(N + 1)
        busy = np.minimum(z, n)
        d = np.arange(n + 1)
        # B[z, d] = P[d departures | z]
        self.B = binom.pmf(d[None, :], busy[:, None], self.p)
        self.B[d[None, :] > busy[:, None]] = 0.0
        # room m = N + d - z; cells with d > min(z, n) carry zero weight
        self.room = np.minimum(N + d[None, :] - z[:, None], N)

    def routing(self, t):
        """R[a, z, z'] = P[z' | z, a] after departures and admissions."""
        spec = self.spec
        N, n = spec.capacity, spec.n
        pmf, surv, _ = poisson_tables(spec.lam[t], N)
        A = spec.n_actions
        R = np.zeros((A, N + 1, N + 1))
        z = np.arange(N + 1)
        for dd in range(n + 1):
            w = self.B[:, dd]
            base = z - dd
            ok = base >= 0
            for zp in range(N + 1):
                y = zp - base
                valid = ok & (y >= 0)
                if zp < N:
                    R[:, valid, zp] += w[valid] * pmf[:, y[valid]]
                else:
                    R[:, valid, zp] += w[valid] * surv[:, y[valid]]
        return R

    def reward(self, t):
        """(Z, A) expected one-period reward."""
        spec = self.spec
        _, _, te = poisson_tables(spec.lam[t], spec.capacity)
        admitted = np.einsum("zd,azd->za", self.B, te[:, self.room])
        z = np.arange(spec.capacity + 1)
        return np.asarray(spec.prices)[None, :] * admitted \
            - spec.c_W * np.maximum(z - spec.n, 0)[:, None]

    def terminal(self):
        return -self.spec.c_T * np.arange(self.spec.capacity + 1, dtype=float)

    def q_values(self, t, v_next):
        return self.reward(t) + np.einsum("azk,k->za", self.routing(t), v_next)


def geometric_exact(spec, p=None):
    """Optimal count policy and its value from the empty system."""
    model = GeometricCountModel(spec, p)
    T, Z = spec.horizon, spec.n_counters
    V = np.zeros((T + 1, Z))
    acts = np.zeros((T, Z), dtype=int)
    V[T] = model.terminal()
    for t in range(T - 1, -1, -1):
        Q = model.q_values(t, V[t + 1])
        acts[t] = np.argmax(Q, axis=1)
        V[t] = Q[np.arange(Z), acts[t]]
    return CountSolution(V, acts, float(V[0, 0]))


def geometric_evaluate(spec, actions, p=None):
    """Exact value of a pure count policy (T, Z) in the geometric count MDP."""
    model = GeometricCountModel(spec, p)
    actions = np.asarray(actions)
    V = model.terminal()
    for t in range(spec.horizon - 1, -1, -1):
        V = model.q_values(t, V)[np.arange(spec.n_counters), actions[t]]
    return float(V[0])
