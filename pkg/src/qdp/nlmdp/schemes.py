"""Forward and backward iterative schemes for nonlinear MDPs."""
from dataclasses import dataclass, field

import numpy as np

from qdp.errors import ModelContractError


@dataclass(frozen=True, eq=False)
class MarginalsTrace:
    """State marginals mu^(0..T), shape (T+1, S)."""

    mu: np.ndarray

    @property
    def horizon(self):
        return self.mu.shape[0] - 1


@dataclass(frozen=True, eq=False)
class SigmaTrace:
    """sigma^(0..T) with shape (T+1, S) and Q^(0..T-1) with shape (T, S, A)."""

    sigma: np.ndarray
    q: np.ndarray


@dataclass(frozen=True, eq=False)
class RewardDecomposition:
    """Expected total reward split by period and by named component.

    ``per_period[t]`` is the expected reward collected at epoch t, the last
    entry being the terminal reward. ``components[name][t]`` splits each
    period further; components sum to ``per_period``.
    """

    total: float
    per_period: np.ndarray
    components: dict = field(default_factory=dict)

    def component_totals(self):
        return {k: float(v.sum()) for k, v in self.components.items()}


def forward_marginals(model, policy, mu0):
    """Propagate mu0 through the policy-averaged nonlinear kernel."""
    T = model.horizon
    if policy.horizon != T:
        raise ModelContractError(f"policy horizon {policy.horizon} != model horizon {T}")
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.shape != (model.n_states,):
        raise ModelContractError(f"mu0 has shape {mu0.shape}, expected ({model.n_states},)")
    mu = np.empty((T + 1, model.n_states))
    mu[0] = mu0
    for t in range(T):
        mu[t + 1] = model.step_forward(t, mu[t], policy.action_probs(t))
    return MarginalsTrace(mu)


def expected_total_reward(model, policy, trace):
    """J = sum of expected per-period rewards plus expected terminal reward."""
    T = model.horizon
    rows = [model.step_reward(t, trace.mu[t], policy.action_probs(t)) for t in range(T)]
    rows.append(model.terminal_value(trace.mu[T]))
    names = []
    for r in rows:
        names.extend(k for k in r if k not in names)
    components = {k: np.array([r.get(k, 0.0) for r in rows]) for k in names}
    per_period = np.array([sum(r.values()) for r in rows])
    return RewardDecomposition(float(per_period.sum()), per_period, components)


def q_function(model, mu, sigma_next, t):
    """Q(s, a) = r_mu(s, a) + sum_s' p_mu(s'|s, a) sigma'(s')."""
    return model.reward(t, mu) + model.kernel(t, mu) @ np.asarray(sigma_next)


def backward_sigma(model, policy, trace):
    """Backward recursion for sigma^(t) = grad_mu J^(t), with the Q tables."""
    T = model.horizon
    S, A = model.n_states, model.n_actions
    sigma = np.empty((T + 1, S))
    q = np.empty((T, S, A))
    sigma[T] = model.terminal_sigma(trace.mu[T])
    for t in range(T - 1, -1, -1):
        sigma[t], q[t] = model.step_sigma(t, trace.mu[t], policy.action_probs(t), sigma[t + 1])
    return SigmaTrace(sigma, q)


def policy_gradient(model, policy, trace, sigmas):
    """dJ/dtheta^(t)_z(a) = sum_{s in S_z} mu^(t)(s) Q^(t)(s, a), shape (T, Z, A)."""
    T = model.horizon
    grad = np.zeros((T, policy.n_experts, policy.n_actions))
    for t in range(T):
        w = trace.mu[t]
        live = w > 0
        np.add.at(grad[t], policy.assignment[live], w[live, None] * sigmas.q[t][live])
    return grad
