"""The nonlinear MDP model interface.

A model exposes its time-indexed kernels, rewards and their partial
derivatives in the state marginal mu as dense numpy arrays:

* ``kernel(t, mu)`` -> ``(S, A, S)`` with ``P[s, a, s'] = p_mu(s'|s, a)``
* ``reward(t, mu)`` -> ``(S, A)``
* ``terminal_reward(mu)`` -> ``(S,)``
* ``kernel_mu_partial(t, mu)`` -> ``(S, A, S, S)``, last axis the
  coordinate ``mu(j)`` being differentiated
* ``reward_mu_partial(t, mu)`` -> ``(S, A, S)``
* ``terminal_mu_partial(mu)`` -> ``(S, S)``

Partials are ordinary partial derivatives in ambient coordinates. Rows for
states with ``mu(s) = 0`` are never read by the engine.

The ``step_*`` hooks implement one period of the forward and backward
schemes generically. Structured models may override them with faster
equivalents; the generic versions are the reference.
"""
import numpy as np

from qdp.errors import ModelContractError, UnsupportedModelError
from qdp.pmf import as_pmf

KERNEL_TOL = 1e-9


class NonlinearModel:
    horizon = 0
    n_states = 0
    n_actions = 0

    # -- model pieces -------------------------------------------------------
    def kernel(self, t, mu):
        raise NotImplementedError

    def reward(self, t, mu):
        raise NotImplementedError

    def terminal_reward(self, mu):
        raise NotImplementedError

    def kernel_mu_partial(self, t, mu):
        raise UnsupportedModelError(f"{type(self).__name__} has no kernel mu-partials")

    def reward_mu_partial(self, t, mu):
        raise UnsupportedModelError(f"{type(self).__name__} has no reward mu-partials")

    def terminal_mu_partial(self, mu):
        raise UnsupportedModelError(f"{type(self).__name__} has no terminal mu-partials")

    def reward_components(self, t, mu):
        """Named (S, A) reward pieces summing to ``reward(t, mu)``."""
        return {"reward": self.reward(t, mu)}

    def terminal_components(self, mu):
        return {"terminal": self.terminal_reward(mu)}

    # -- one-period hooks ---------------------------------------------------
    def checked_kernel(self, t, mu):
        P = np.asarray(self.kernel(t, mu), dtype=float)
        if P.shape != (self.n_states, self.n_actions, self.n_states):
            raise ModelContractError(f"kernel at t={t} has shape {P.shape}")
        live = P[mu > 0]
        if live.size:
            if not np.all(np.isfinite(live)) or live.min() < -1e-15:
                raise ModelContractError(f"kernel at t={t} has negative or non-finite entries")
            err = np.abs(live.sum(axis=-1) - 1.0).max()
            if err > KERNEL_TOL:
                raise ModelContractError(f"kernel rows at t={t} miss unit mass by {err:.3e}")
        return P

    def step_forward(self, t, mu, pi):
        P = self.checked_kernel(t, mu)
        live = mu > 0
        w = mu[live, None] * pi[live]
        return as_pmf(np.einsum("sa,sak->k", w, P[live]), what=f"marginal at t={t + 1}")

    def step_reward(self, t, mu, pi):
        live = mu > 0
        w = mu[live, None] * pi[live]
        return {k: float(np.sum(w * v[live])) for k, v in self.reward_components(t, mu).items()}

    def terminal_value(self, mu):
        live = mu > 0
        return {k: float(mu[live] @ v[live]) for k, v in self.terminal_components(mu).items()}

    def terminal_sigma(self, mu):
        live = mu > 0
        dR = np.asarray(self.terminal_mu_partial(mu))
        return self.terminal_reward(mu) + mu[live] @ dR[live]

    def step_sigma(self, t, mu, pi, sigma_next):
        """Return ``(sigma_t, Q_t)`` for one period of the backward scheme."""
        P = self.kernel(t, mu)
        Q = self.reward(t, mu) + P @ sigma_next
        sigma = np.sum(pi * Q, axis=1)
        live = mu > 0
        w = mu[live, None] * pi[live]
        dR = np.asarray(self.reward_mu_partial(t, mu))[live]
        dP = np.asarray(self.kernel_mu_partial(t, mu))[live]
        dQ = dR + np.einsum("sakj,k->saj", dP, sigma_next)
        return sigma + np.einsum("sa,saj->j", w, dQ), Q


class DenseModel(NonlinearModel):
    """Model backed by callables returning dense arrays (handy for tests).

    ``kernel_fn(t, mu)``, ``reward_fn(t, mu)`` and ``terminal_fn(mu)`` are
    required; the partial callables are optional.
    """

    def __init__(self, horizon, n_states, n_actions, kernel_fn, reward_fn, terminal_fn,
                 kernel_partial_fn=None, reward_partial_fn=None, terminal_partial_fn=None):
        self.horizon = int(horizon)
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        self._kernel = kernel_fn
        self._reward = reward_fn
        self._terminal = terminal_fn
        self._dkernel = kernel_partial_fn
        self._dreward = reward_partial_fn
        self._dterminal = terminal_partial_fn

    def kernel(self, t, mu):
        return self._kernel(t, mu)

    def reward(self, t, mu):
        return self._reward(t, mu)

    def terminal_reward(self, mu):
        return self._terminal(mu)

    def kernel_mu_partial(self, t, mu):
        if self._dkernel is None:
            return super().kernel_mu_partial(t, mu)
        return self._dkernel(t, mu)

    def reward_mu_partial(self, t, mu):
        if self._dreward is None:
            return super().reward_mu_partial(t, mu)
        return self._dreward(t, mu)

    def terminal_mu_partial(self, mu):
        if self._dterminal is None:
            return super().terminal_mu_partial(mu)
        return self._dterminal(mu)
