"""Block recursion for the trajectory Fisher information.

Parameters are softmax logits gamma^(t)_z(a) of a partitioned policy, one
block of size Z*A per epoch, flattened as ``z * A + a``. The score of the
policy factor is ``e_(z,a) - pi_z`` on the expert's own block.
"""
from dataclasses import dataclass

import numpy as np

from qdp.errors import NumericalDomainError


@dataclass(frozen=True, eq=False)
class FisherBlocks:
    """Fisher blocks keyed by epoch pairs plus the K, M, G matrices."""

    blocks: dict
    K: list
    M: list
    G: list
    jac_theta: list
    jac_mu: list

    def assemble(self):
        T = len(self.K)
        if T == 0:
            return np.zeros((0, 0))
        return np.block([[self.blocks[(i, j)] for j in range(T)] for i in range(T)])


def _check(name, a):
    if not np.all(np.isfinite(a)):
        raise NumericalDomainError(f"{name} has non-finite entries")
    return a


def fisher_blocks(model, policy, trace):
    T = model.horizon
    Zn, A = policy.n_experts, policy.n_actions
    assign = policy.assignment
    K, M, Jt, Jm = [], [], [], []
    for t in range(T):
        mu = trace.mu[t]
        pi = policy.action_probs(t)
        theta = policy.theta[t]
        reach = np.bincount(assign, weights=mu, minlength=Zn)
        Kt = np.zeros((Zn * A, Zn * A))
        for z in range(Zn):
            sl = slice(z * A, (z + 1) * A)
            Kt[sl, sl] = reach[z] * (np.diag(theta[z]) - np.outer(theta[z], theta[z]))
        K.append(Kt)

        P = model.kernel(t, mu)
        dP = np.asarray(model.kernel_mu_partial(t, mu))
        live = mu > 0
        # d mu'(s') / d gamma_(z,a)
        centered = P - np.einsum("sa,sak->sk", pi, P)[:, None, :]
        contrib = (mu[:, None] * pi)[:, :, None] * centered
        jt = np.zeros((Zn, A, model.n_states))
        np.add.at(jt, assign[live], contrib[live])
        Jt.append(_check("grad_theta mu", jt.reshape(Zn * A, -1)))
        # d mu'(s') / d mu(j)
        w = mu[live, None] * pi[live]
        jm = np.einsum("ja,jak->jk", pi, P) + np.einsum("sa,sakj->jk", w, dP[live])
        Jm.append(_check("grad_mu mu", jm))
        # E[grad_mu log p grad_mu log p^T]
        Pl, dPl = P[live], dP[live]
        pos = Pl > 0
        ratio = np.where(pos, w[:, :, None] / np.where(pos, Pl, 1.0), 0.0)
        M.append(_check("M", np.einsum("sak,saki,sakj->ij", ratio, dPl, dPl)))

    S = model.n_states
    G = [None] * (T + 1)
    G[T] = np.zeros((S, S))
    for t in range(T - 1, -1, -1):
        G[t] = M[t] + Jm[t] @ G[t + 1] @ Jm[t].T

    blocks = {}
    for t2 in range(T):
        blocks[(t2, t2)] = K[t2] + Jt[t2] @ G[t2 + 1] @ Jt[t2].T
        # grad_{theta^(t1)} mu^(t2+1) = Jt[t1] Jm[t1+1] ... Jm[t2]
        chain = Jt[t2]
        for t1 in range(t2 - 1, -1, -1):
            chain_t1 = Jt[t1]
            for tau in range(t1 + 1, t2 + 1):
                chain_t1 = chain_t1 @ Jm[tau]
            blocks[(t1, t2)] = chain_t1 @ G[t2 + 1] @ chain.T
            blocks[(t2, t1)] = blocks[(t1, t2)].T
    return FisherBlocks(blocks, K, M, G, Jt, Jm)
