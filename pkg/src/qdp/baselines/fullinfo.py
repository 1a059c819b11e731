"""Full-information MDP on states (z, h), h the histogram of remaining durations.

Dynamics match the simulator: h(1) customers depart, survivors' remaining
durations decrease by one, arrivals are admitted up to n + b + d - z, and
x(z') - (x(z) - d) entrants take free servers with i.i.d. g durations.

The time-independent part (survivor shift plus multinomial entrant
durations) is stored once as a sparse matrix ``W`` with one row per
(state, z') pair, so that for any value vector V,
``(W @ V)[row] = E[V(z', h') | z, h, z']``. Period-t arrivals then only
enter through the routing probabilities rho_a(z' | z, d).
"""
import itertools
from dataclasses import dataclass
from math import comb, factorial

import numpy as np
import scipy.sparse as sp

from qdp.errors import ResourceGuardError
from qdp.pricing.components import poisson_tables

STATE_GUARD = 5e6


def fullinfo_state_count(spec):
    L = spec.n_labels
    return sum(comb(int(x) + L - 1, L - 1) for x in spec.x)


def _compositions(total, L):
    """All count vectors of length L summing to ``total``."""
    out = []
    for combo in itertools.combinations_with_replacement(range(L), total):
        out.append(np.bincount(np.asarray(combo, dtype=int), minlength=L))
    return np.array(out, dtype=np.int64).reshape(-1, L)


def _entrant_outcomes(e, g, L):
    """Count vectors of e i.i.d. draws from g and their multinomial probabilities."""
    support = np.nonzero(g)[0]
    vecs, probs = [], []
    for combo in itertools.combinations_with_replacement(support, e):
        counts = np.bincount(np.asarray(combo, dtype=int), minlength=L)
        coef = factorial(e)
        for c in counts[counts > 0]:
            coef //= factorial(int(c))
        vecs.append(counts)
        probs.append(coef * np.prod(g[support] ** counts[support]))
    return np.array(vecs, dtype=np.int64).reshape(-1, L), np.array(probs)


@dataclass(eq=False)
class FullInfoModel:
    spec: object
    z: np.ndarray          # counter of each state
    h: np.ndarray          # (S, L) histograms
    W: sp.csr_matrix       # (rows, S)
    row_state: np.ndarray
    row_zp: np.ndarray
    gather: sp.csr_matrix  # (S, rows) sums rows back onto their state

    @property
    def n_states(self):
        return self.z.shape[0]

    @property
    def departures(self):
        return self.h[:, 0]

    def initial(self):
        mu = np.zeros(self.n_states)
        mu[0] = 1.0
        return mu

    def routing(self, t):
        """rho_a(z'_row | z_row, d_row) for every row, shape (rows, A)."""
        spec = self.spec
        N = spec.capacity
        pmf, surv, _ = poisson_tables(spec.lam[t], N)
        z = self.z[self.row_state]
        d = self.departures[self.row_state]
        zp = self.row_zp
        top = zp == N
        y = np.where(top, N + d - z, zp + d - z)
        return np.where(top[:, None], surv[:, y].T, pmf[:, y].T)

    def reward(self, t):
        """r^(t)(z, h, a), shape (S, A)."""
        spec = self.spec
        N = spec.capacity
        _, _, te = poisson_tables(spec.lam[t], N)
        m = N + self.departures - self.z
        return np.asarray(spec.prices)[None, :] * te[:, m].T \
            - spec.c_W * np.maximum(self.z - spec.n, 0)[:, None]

    def terminal(self):
        return -self.spec.c_T * self.z.astype(float)

    def q_values(self, t, v_next):
        """Q^(t)(s, a) = r + sum_z' rho_a(z'|z, d) E[V(z', h')]."""
        wv = self.W @ v_next
        return self.reward(t) + self.gather @ (self.routing(t) * wv[:, None])

    def step_distribution(self, t, mu, pi):
        """One forward step under state-dependent action pmfs pi (S, A)."""
        rho = self.routing(t)
        weight = mu[self.row_state] * np.sum(pi[self.row_state] * rho, axis=1)
        return self.W.T @ weight


def build_fullinfo(spec, guard=STATE_GUARD):
    """Enumerate (z, h) states and the entrant-duration transition matrix."""
    size = fullinfo_state_count(spec)
    if size > guard:
        raise ResourceGuardError("full-information state space", size, guard)
    L, N, n = spec.n_labels, spec.capacity, spec.n
    x = spec.x
    base = n + 1
    if (N + 1) * float(base) ** L >= 2.0 ** 62:
        raise ResourceGuardError("full-information state encoding", (N + 1) * float(base) ** L, 2.0 ** 62)
    weights = base ** np.arange(L, dtype=np.int64)
    span = int(base) ** L
    zs, hs = [], []
    for z in range(N + 1):
        comp = _compositions(int(x[z]), L)
        zs.append(np.full(comp.shape[0], z))
        hs.append(comp)
    z_arr = np.concatenate(zs)
    h_arr = np.concatenate(hs)
    keys = z_arr * span + h_arr @ weights
    order = np.argsort(keys, kind="stable")
    z_arr, h_arr, keys = z_arr[order], h_arr[order], keys[order]

    surv = np.zeros_like(h_arr)
    surv[:, :-1] = h_arr[:, 1:]
    surv_code = surv @ weights
    n_surv = x[z_arr] - h_arr[:, 0]
    outcomes = {}
    row_state, row_zp, cols, data, row_ptr = [], [], [], [], [0]
    for s in range(z_arr.shape[0]):
        lo = z_arr[s] - h_arr[s, 0]
        for zp in range(lo, N + 1):
            e = int(x[zp] - n_surv[s])
            if e not in outcomes:
                vecs, probs = _entrant_outcomes(e, spec.g, L)
                outcomes[e] = (vecs @ weights, probs)
            codes, probs = outcomes[e]
            row_state.append(s)
            row_zp.append(zp)
            cols.append(zp * span + surv_code[s] + codes)
            data.append(probs)
            row_ptr.append(row_ptr[-1] + probs.size)
    col_keys = np.concatenate(cols)
    col_idx = np.searchsorted(keys, col_keys)
    assert np.array_equal(keys[col_idx], col_keys)
    S = z_arr.shape[0]
    rows = len(row_state)
    W = sp.csr_matrix((np.concatenate(data), col_idx, np.asarray(row_ptr)), shape=(rows, S))
    row_state = np.asarray(row_state)
    gather = sp.csr_matrix((np.ones(rows), (row_state, np.arange(rows))), shape=(S, rows))
    return FullInfoModel(spec, z_arr, h_arr, W, row_state, np.asarray(row_zp), gather)


@dataclass(eq=False)
class BellmanSolution:
    values: np.ndarray    # (T+1, S)
    actions: np.ndarray   # (T, S)
    value: float          # at the empty system


def bellman_optimal(model):
    T = model.spec.horizon
    V = np.zeros((T + 1, model.n_states))
    acts = np.zeros((T, model.n_states), dtype=int)
    V[T] = model.terminal()
    for t in range(T - 1, -1, -1):
        Q = model.q_values(t, V[t + 1])
        acts[t] = np.argmax(Q, axis=1)
        V[t] = Q[np.arange(model.n_states), acts[t]]
    return BellmanSolution(V, acts, float(V[0, 0]))


def _count_pi(model, theta_t):
    return np.asarray(theta_t)[model.z]


def bellman_evaluate(model, count_policy):
    """Exact value of a count policy: (T, Z) action indices or (T, Z, A) pmfs."""
    T = model.spec.horizon
    theta = _as_theta(model, count_policy)
    V = model.terminal()
    for t in range(T - 1, -1, -1):
        V = np.sum(_count_pi(model, theta[t]) * model.q_values(t, V), axis=1)
    return float(V[0])


def _as_theta(model, policy):
    policy = np.asarray(policy)
    if policy.ndim == 3:
        return policy
    theta = np.zeros(policy.shape + (model.spec.n_actions,))
    np.put_along_axis(theta, policy[..., None], 1.0, axis=2)
    return theta


def state_distributions(model, state_pis):
    """Forward marginals from the empty system; state_pis[t] is (S, A)."""
    mus = [model.initial()]
    for t, pi in enumerate(state_pis):
        mus.append(model.step_distribution(t, mus[-1], pi))
    return np.array(mus)


def _state_pis_from_actions(model, actions):
    A = model.spec.n_actions
    out = []
    for a in actions:
        pi = np.zeros((model.n_states, A))
        pi[np.arange(model.n_states), a] = 1.0
        out.append(pi)
    return out


def extract_count_policy(model, solution):
    """Count policy from the optimal full-information policy.

    Backward in time, Q^(t)(z, h, a) = r + E[V^(t+1)(z', h')] where V^(t+1)
    is the full-information value of following the already extracted
    actions from t+1 on; then a(t, z) = argmax_a sum_h mu^(t)(h|z) Q^(t)(z, h, a)
    with mu^(t) the optimal policy's state distribution. Unreachable
    counters get action 0. Returns the (T, Z) actions and their exact value.
    """
    spec = model.spec
    T, Z, A = spec.horizon, spec.n_counters, spec.n_actions
    mus = state_distributions(model, _state_pis_from_actions(model, solution.actions))
    V = model.terminal()
    actions = np.zeros((T, Z), dtype=int)
    for t in range(T - 1, -1, -1):
        Q = model.q_values(t, V)
        mass = np.bincount(model.z, weights=mus[t], minlength=Z)
        agg = np.zeros((Z, A))
        np.add.at(agg, model.z, mus[t][:, None] * Q)
        actions[t] = np.where(mass > 0, np.argmax(agg, axis=1), 0)
        V = Q[np.arange(model.n_states), actions[t][model.z]]
    return actions, float(V[0])


@dataclass(frozen=True)
class QComparison:
    cosine: float
    norm_ratio: float


def q_extract(model, theta):
    """Policy-induced full-information Q averaged over h given z, shape (T, Z, A),
    together with the count masses (T, Z)."""
    spec = model.spec
    T, Z, A = spec.horizon, spec.n_counters, spec.n_actions
    theta = _as_theta(model, theta)
    pis = [_count_pi(model, theta[t]) for t in range(T)]
    mus = state_distributions(model, pis)
    out = np.zeros((T, Z, A))
    mass = np.zeros((T, Z))
    V = model.terminal()
    for t in range(T - 1, -1, -1):
        Q = model.q_values(t, V)
        V = np.sum(pis[t] * Q, axis=1)
        mass[t] = np.bincount(model.z, weights=mus[t], minlength=Z)
        np.add.at(out[t], model.z, mus[t][:, None] * Q)
        live = mass[t] > 0
        out[t][live] /= mass[t][live, None]
        out[t][~live] = 0.0
    return out, mass


def compare_centered(q_a, q_b, support):
    """Cosine and length ratio |a|/|b| of action-centered tables over a (T, Z) support."""
    a = (q_a - q_a.mean(axis=-1, keepdims=True))[support].ravel()
    b = (q_b - q_b.mean(axis=-1, keepdims=True))[support].ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 and nb == 0:
        return QComparison(1.0, 1.0)
    return QComparison(float(a @ b / (na * nb)), float(na / nb))


def q_extract_diagnostic(model, theta, qbar_table):
    """Compare QDP's centered Q-bar with the extracted full-information Q."""
    qe, mass = q_extract(model, theta)
    support = (mass > 0) & (qbar_table.reach > 0)
    return compare_centered(qbar_table.qbar, qe, support)
