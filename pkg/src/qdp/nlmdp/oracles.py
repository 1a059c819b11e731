"""Brute-force references for the iterative schemes.

Everything here recomputes quantities by a different route than the
engine (trajectory enumeration, finite differences, complex-step
differentiation, plain Bellman recursion) and is meant for verification.
"""
import numpy as np

from qdp.errors import ResourceGuardError
from qdp.nlmdp.model import DenseModel
from qdp.policy.tabular import PartitionedPolicy

TRAJECTORY_GUARD = 1e7


def _softmax(x, axis=-1):
    x = x - np.max(x.real, axis=axis, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=axis, keepdims=True)


def random_model(rng, horizon, n_states, n_actions, markov=False, coupling=1.0):
    """Random smooth nonlinear model with analytic mu-partials.

    Kernels are softmaxes of logits affine in mu; rewards are quadratic in mu.
    With ``markov=True`` nothing depends on mu. All pieces accept complex mu
    so they can be complex-step differentiated.
    """
    T, S, A = horizon, n_states, n_actions
    c = 0.0 if markov else coupling
    base = rng.normal(size=(T, S, A, S))
    W = c * rng.normal(size=(T, S, A, S, S))
    r0 = rng.normal(size=(T, S, A))
    r1 = c * rng.normal(size=(T, S, A, S))
    r2 = c * rng.normal(size=(T, S, A, S))
    rT0 = rng.normal(size=S)
    rT1 = c * rng.normal(size=(S, S))
    rT2 = c * rng.normal(size=(S, S))

    def kernel(t, mu):
        return _softmax(base[t] + W[t] @ mu, axis=2)

    def dkernel(t, mu):
        p = kernel(t, mu)
        mean_w = np.einsum("sak,sakj->saj", p, W[t])
        return p[..., None] * (W[t] - mean_w[:, :, None, :])

    def reward(t, mu):
        return r0[t] + r1[t] @ mu + r2[t] @ (mu * mu)

    def dreward(t, mu):
        return r1[t] + 2.0 * r2[t] * mu

    def terminal(mu):
        return rT0 + rT1 @ mu + rT2 @ (mu * mu)

    def dterminal(mu):
        return rT1 + 2.0 * rT2 * mu

    return DenseModel(T, S, A, kernel, reward, terminal, dkernel, dreward, dterminal)


def random_policy(rng, horizon, n_states, n_actions, n_experts=None):
    """Interior random partitioned policy; every expert owns at least one state."""
    if n_experts is None:
        n_experts = int(rng.integers(1, n_states + 1))
    assignment = np.concatenate([np.arange(n_experts),
                                 rng.integers(0, n_experts, n_states - n_experts)])
    rng.shuffle(assignment)
    theta = rng.dirichlet(np.ones(n_actions), size=(horizon, n_experts))
    theta = 0.9 * theta + 0.1 / n_actions
    return PartitionedPolicy(assignment, theta)


def plain_forward(model, pis, mu0):
    """Forward recursion without validation; works with complex inputs."""
    mus = [np.asarray(mu0)]
    for t, pi in enumerate(pis):
        mus.append(np.einsum("s,sa,sak->k", mus[-1], pi, model.kernel(t, mus[-1])))
    return mus


def plain_objective(model, pis, mu0, t0=0):
    """J^(t0) evaluated from the marginal mu0 placed at epoch t0."""
    mu = np.asarray(mu0)
    J = 0.0
    for t in range(t0, model.horizon):
        pi = pis[t]
        J = J + np.einsum("s,sa,sa->", mu, pi, model.reward(t, mu))
        mu = np.einsum("s,sa,sak->k", mu, pi, model.kernel(t, mu))
    return J + mu @ model.terminal_reward(mu)


def _pis(policy, theta=None):
    theta = policy.theta if theta is None else theta
    return [theta[t][policy.assignment] for t in range(theta.shape[0])]


def fd_policy_gradient(model, policy, mu0, h=1e-5):
    """Directional derivatives of J along e_a - 1/|A| for every (t, z, a)."""
    T, Zn, A = policy.theta.shape
    out = np.zeros((T, Zn, A))
    for t in range(T):
        for z in range(Zn):
            for a in range(A):
                v = np.full(A, -1.0 / A)
                v[a] += 1.0
                th = np.array(policy.theta)
                th[t, z] += h * v
                jp = plain_objective(model, _pis(policy, th), mu0)
                th[t, z] -= 2 * h * v
                jm = plain_objective(model, _pis(policy, th), mu0)
                out[t, z, a] = (jp - jm) / (2 * h)
    return out


def tangent_projection(grad):
    """Directional derivative along e_a - 1/|A| implied by a full gradient."""
    return grad - grad.mean(axis=-1, keepdims=True)


def fd_sigma(model, policy, mu, t, h=1e-6):
    """Central differences of J^(t) in each ambient coordinate mu(s)."""
    pis = _pis(policy)
    out = np.zeros(model.n_states)
    for s in range(model.n_states):
        e = np.zeros(model.n_states)
        e[s] = h
        out[s] = (plain_objective(model, pis, mu + e, t) - plain_objective(model, pis, mu - e, t)) / (2 * h)
    return out


def bellman_evaluation(model, policy, mu0=None):
    """Policy evaluation for a mu-independent model: (V (T+1, S), Q (T, S, A))."""
    T, S = model.horizon, model.n_states
    mu = np.full(S, 1.0 / S) if mu0 is None else mu0
    V = np.zeros((T + 1, S))
    Q = np.zeros((T, S, model.n_actions))
    V[T] = model.terminal_reward(mu)
    for t in range(T - 1, -1, -1):
        Q[t] = model.reward(t, mu) + model.kernel(t, mu) @ V[t + 1]
        V[t] = np.sum(policy.action_probs(t) * Q[t], axis=1)
    return V, Q


def enumerate_trajectories(model, policy, mu0, guard=TRAJECTORY_GUARD):
    """All (s0, a0, ..., sT) sequences with their probabilities.

    Kernel factors are evaluated at the forward marginals. Returns an
    integer array of shape (N, 2T+1) and the probability vector.
    """
    T, S, A = model.horizon, model.n_states, model.n_actions
    size = float(S) ** (T + 1) * float(A) ** T
    if size > guard:
        raise ResourceGuardError("trajectory enumeration", size, guard)
    pis = _pis(policy)
    mus = plain_forward(model, pis, mu0)
    paths = np.arange(S)[:, None]
    probs = np.asarray(mu0, dtype=float).copy()
    for t in range(T):
        P = model.kernel(t, mus[t])
        s = paths[:, -1]
        n = paths.shape[0]
        a = np.tile(np.repeat(np.arange(A), S), n)
        s2 = np.tile(np.arange(S), n * A)
        src = np.repeat(np.arange(n), A * S)
        probs = probs[src] * pis[t][s[src], a] * P[s[src], a, s2]
        paths = np.column_stack([paths[src], a, s2])
    return paths, probs


def trajectory_rewards(model, policy, mu0, paths):
    """Summed rewards along each enumerated path (rewards read the marginals)."""
    T = model.horizon
    mus = plain_forward(model, _pis(policy), mu0)
    total = np.zeros(paths.shape[0])
    for t in range(T):
        total += model.reward(t, mus[t])[paths[:, 2 * t], paths[:, 2 * t + 1]]
    return total + model.terminal_reward(mus[T])[paths[:, 2 * T]]


def enumeration_fisher(model, policy, mu0, h=1e-30):
    """E[grad log q grad log q^T] over enumerated trajectories.

    Gradients are taken in softmax-logit coordinates by complex-step
    differentiation of the full trajectory log-likelihood, with the kernel's
    mu argument following the perturbed marginals.
    """
    T, Zn, A = policy.theta.shape
    paths, probs = enumerate_trajectories(model, policy, mu0)
    keep = probs > 0
    paths, probs = paths[keep], probs[keep]
    logits = np.log(policy.theta)
    n_par = T * Zn * A
    scores = np.zeros((paths.shape[0], n_par))
    for j in range(n_par):
        g = logits.astype(complex).reshape(-1)
        g[j] += 1j * h
        theta = _softmax(g.reshape(T, Zn, A), axis=2)
        pis = [theta[t][policy.assignment] for t in range(T)]
        mus = plain_forward(model, pis, np.asarray(mu0, dtype=complex))
        logq = np.zeros(paths.shape[0], dtype=complex)
        for t in range(T):
            s, a, s2 = paths[:, 2 * t], paths[:, 2 * t + 1], paths[:, 2 * t + 2]
            logq += np.log(pis[t][s, a]) + np.log(model.kernel(t, mus[t])[s, a, s2])
        scores[:, j] = logq.imag / h
    return np.einsum("n,ni,nj->ij", probs, scores, scores)
