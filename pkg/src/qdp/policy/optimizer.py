"""Exponentiated Q-ascent on state-partitioned tabular policies."""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from qdp.errors import PolicyDomainError, TrainingAborted
from qdp.nlmdp.schemes import backward_sigma, expected_total_reward, forward_marginals
from qdp.policy.tabular import PartitionedPolicy

MAX_HALVINGS = 60


@dataclass(frozen=True, eq=False)
class QBarTable:
    """Expert-conditional averages of Q, shape (T, Z, A), and expert masses (T, Z)."""

    qbar: np.ndarray
    reach: np.ndarray


def qbar(trace, model, sigmas, policy):
    T = model.horizon
    Zn, A = policy.n_experts, policy.n_actions
    out = np.zeros((T, Zn, A))
    reach = np.zeros((T, Zn))
    for t in range(T):
        mu = trace.mu[t]
        live = mu > 0
        z = policy.assignment[live]
        reach[t] = np.bincount(z, weights=mu[live], minlength=Zn)
        np.add.at(out[t], z, mu[live, None] * sigmas.q[t][live])
    pos = reach > 0
    out[pos] /= reach[pos][:, None]
    return QBarTable(out, reach)


def approx_natural_gradient(qb):
    """Per-(t, z) action-centered Q-bar: the approximate natural gradient direction."""
    q = qb.qbar if isinstance(qb, QBarTable) else np.asarray(qb)
    return q - q.mean(axis=-1, keepdims=True)


def _shifted_exponent(q, eta):
    x = eta * q
    return x - x.max(axis=-1, keepdims=True)


def exp_q_update(policy, qb, eta):
    """theta'(a) proportional to theta(a) exp(eta Q-bar(a)) for every reachable (t, z)."""
    if not eta > 0:
        raise PolicyDomainError("eta must be positive")
    if not policy.is_interior():
        raise PolicyDomainError("exponentiated update needs an interior policy")
    theta = policy.theta * np.exp(_shifted_exponent(qb.qbar, eta))
    theta /= theta.sum(axis=-1, keepdims=True)
    theta = np.where((qb.reach > 0)[..., None], theta, policy.theta)
    return policy.with_theta(theta)


def _group_exponents(policy, q):
    """Raw sums of Q-bar over the cells of each sharing group, broadcast back."""
    out = np.zeros_like(q)
    for zs, ts in policy.sharing:
        cells = np.ix_(ts, zs)
        out[cells] = q[cells].sum(axis=(0, 1))
    return out


def shared_update(policy, qb, eta):
    """Exponentiated update with one pmf per sharing group (raw, unweighted sums)."""
    if policy.sharing is None:
        raise PolicyDomainError("shared_update needs a policy with sharing groups")
    if not eta > 0:
        raise PolicyDomainError("eta must be positive")
    if not policy.is_interior():
        raise PolicyDomainError("exponentiated update needs an interior policy")
    theta = policy.theta * np.exp(_shifted_exponent(_group_exponents(policy, qb.qbar), eta))
    return policy.with_theta(theta / theta.sum(axis=-1, keepdims=True))


def stopping_stat(policy, qb):
    """sum over (t, z) of reach * Var_{A ~ theta}(Q-bar(A))."""
    theta = policy.theta
    m = np.sum(theta * qb.qbar, axis=-1, keepdims=True)
    var = np.sum(theta * (qb.qbar - m) ** 2, axis=-1)
    return float(np.sum(qb.reach * var))


def to_pure_policy(policy):
    """Point mass on each row's mode; ties go to the lowest action index."""
    return PartitionedPolicy.from_actions(policy.assignment, policy.pure_actions(),
                                          policy.n_actions, policy.sharing)


@dataclass(frozen=True)
class Violation:
    t: int
    z: int
    action: int
    prob: float
    gap: float


def local_opt_check(policy, qb, tol, support=1e-3):
    """Supported actions (prob >= support) of reachable experts whose Q-bar
    falls more than ``tol`` below the row maximum."""
    gap = qb.qbar.max(axis=-1, keepdims=True) - qb.qbar
    bad = (qb.reach[..., None] > 0) & (policy.theta >= support) & (gap > tol)
    return [Violation(int(t), int(z), int(a), float(policy.theta[t, z, a]), float(gap[t, z, a]))
            for t, z, a in zip(*np.nonzero(bad))]


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    J: float
    components: dict
    stopping_stat: float
    eta_effective: float
    accepted: bool


@dataclass(eq=False)
class TrainTrace:
    records: list
    policy: PartitionedPolicy
    converged: bool
    snapshots: dict = field(default_factory=dict)

    @property
    def episodes(self):
        return len(self.records)

    @property
    def final_value(self):
        return self.records[-1].J


class _Evaluator:
    """Caches forward passes of a fixed model and initial marginal."""

    def __init__(self, model, mu0):
        self.model = model
        self.mu0 = mu0

    def forward(self, policy):
        trace = forward_marginals(self.model, policy, self.mu0)
        dec = expected_total_reward(self.model, policy, trace)
        return trace, dec


def _logits_of(policy):
    with np.errstate(divide="ignore"):
        return np.log(policy.theta)


def _step_logits(policy, logits, qb, eta):
    """Log-domain update; avoids underflow of small probabilities to exact zeros."""
    if policy.sharing is not None:
        x = logits + eta * _group_exponents(policy, qb.qbar)
    else:
        x = np.where((qb.reach > 0)[..., None], logits + eta * qb.qbar, logits)
    return x - logsumexp(x, axis=-1, keepdims=True)


def train(model, init, eta, epsilon=1e-6, max_episodes=10_000, adaptive=False, mu0=None,
          snapshot_every=None, callback=None):
    """Exponentiated Q-ascent until the variance statistic drops below ``epsilon``.

    Each episode evaluates the incumbent (forward pass), records it, and stops
    if converged or at the cap; otherwise runs the backward pass and updates.
    With ``adaptive`` a candidate is kept only if it improves J; eta is halved
    up to ``MAX_HALVINGS`` times, after which the best candidate seen is taken.
    ``callback(episode, policy, trace, sigmas, qbar_table)`` sees every
    backward pass.
    """
    if not epsilon > 0:
        raise PolicyDomainError("epsilon must be positive")
    if not init.is_interior():
        raise PolicyDomainError("training needs an interior initial policy")
    if mu0 is None:
        mu0 = model.initial_marginal()
    ev = _Evaluator(model, mu0)
    policy = init
    logits = _logits_of(init)
    trace, dec = ev.forward(policy)
    records, snapshots = [], {}
    converged = False
    eta_used, accepted = 0.0, True
    for episode in range(1, max_episodes + 1):
        if not np.isfinite(dec.total):
            rec = EpisodeRecord(episode, dec.total, dec.component_totals(), float("nan"),
                                eta_used, accepted)
            raise TrainingAborted(f"non-finite objective at episode {episode}",
                                  TrainTrace(records + [rec], policy, False, snapshots))
        sigmas = backward_sigma(model, policy, trace)
        qb = qbar(trace, model, sigmas, policy)
        stat = stopping_stat(policy, qb)
        records.append(EpisodeRecord(episode, dec.total, dec.component_totals(), stat,
                                     eta_used, accepted))
        if snapshot_every and (episode == 1 or episode % snapshot_every == 0):
            snapshots[episode] = policy
        if callback is not None:
            callback(episode, policy, trace, sigmas, qb)
        if stat < epsilon:
            converged = True
            break
        if episode == max_episodes:
            break
        if not adaptive:
            logits = _step_logits(policy, logits, qb, eta)
            policy = policy.with_theta(np.exp(logits))
            trace, dec = ev.forward(policy)
            eta_used, accepted = eta, True
            continue
        step = eta
        best = None
        for _ in range(MAX_HALVINGS + 1):
            cand_logits = _step_logits(policy, logits, qb, step)
            cand = policy.with_theta(np.exp(cand_logits))
            cand_trace, cand_dec = ev.forward(cand)
            if best is None or cand_dec.total > best[3].total:
                best = (cand_logits, cand, cand_trace, cand_dec, step)
            if cand_dec.total > dec.total:
                break
            step /= 2
        accepted = best[3].total > dec.total
        logits, policy, trace, dec, eta_used = best
    return TrainTrace(records, policy, converged, snapshots)


def natural_gradient_oracle(qb, policy):
    """Block pseudoinverse of reach * (diag pi - pi pi^T) applied to the logit
    gradient, per (t, z); zero for unreachable blocks."""
    T, Zn, A = qb.qbar.shape
    out = np.zeros_like(qb.qbar)
    for t in range(T):
        for z in range(Zn):
            r = qb.reach[t, z]
            if r <= 0:
                continue
            p = policy.theta[t, z]
            F = r * (np.diag(p) - np.outer(p, p))
            q = qb.qbar[t, z]
            grad = r * p * (q - p @ q)
            out[t, z] = np.linalg.pinv(F, rcond=1e-12) @ grad
    return out


def softmax_step(policy, qb, eta):
    """softmax(log theta + eta * centered Q-bar), the natural-gradient form of the update."""
    return softmax(np.log(policy.theta) + eta * approx_natural_gradient(qb), axis=-1)
