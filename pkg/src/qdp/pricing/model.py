"""QPLEX pricing model as a nonlinear MDP.

``PricingModel`` runs the forward and backward schemes through factored
sum-product forms: everything is organized around the valid transition
cells (z, d, z') and the label conditionals xi_z, never materializing the
(S, A, S) kernel. ``NaivePricingModel`` exposes the same model through the
dense generic interface, with mu-partials from complex-step
differentiation of the direct formulas; it is the reference for tests.
"""
import numpy as np
from scipy.special import comb

from qdp.nlmdp.model import NonlinearModel
from qdp.pmf import as_pmf
from qdp.policy.tabular import PartitionedPolicy
from qdp.pricing import components as C


class _PricingBase(NonlinearModel):
    def __init__(self, spec):
        self.spec = spec
        self.horizon = spec.horizon
        self.n_states = spec.n_states
        self.n_actions = spec.n_actions

    def initial_marginal(self):
        """Empty system; the label of the (absent) tracked customer is drawn from g."""
        mu = np.zeros((self.spec.n_counters, self.spec.n_labels))
        mu[0] = self.spec.g
        return mu.reshape(-1)

    def counter_policy(self, theta, sharing=None):
        """Partitioned policy with one expert per counter value."""
        return PartitionedPolicy(self.spec.counter_of_state(), theta, sharing)

    def uniform_policy(self, sharing=None):
        return PartitionedPolicy.uniform(self.spec.counter_of_state(), self.horizon,
                                         self.n_actions, self.spec.n_counters, sharing)


class PricingModel(_PricingBase):
    """Fast structured implementation for counter-based policies."""

    def __init__(self, spec):
        super().__init__(spec)
        N = spec.capacity
        Z = spec.n_counters
        x = spec.x
        D = int(x.max()) + 1
        zz, dd, kk = np.meshgrid(np.arange(Z), np.arange(D), np.arange(Z), indexing="ij")
        valid = (dd <= x[zz]) & (kk >= zz - dd)
        cz, cd, ck = zz[valid], dd[valid], kk[valid]
        self._cz, self._cd, self._ck = cz, cd, ck
        self._top = ck == N
        # flat index into a (Z, N+1) table: y = z'+d-z below the top, m = N+d-z at the top
        self._pidx = cz * (N + 1) + np.where(self._top, N + cd - cz, ck + cd - cz)
        self._pair = cz * Z + ck
        self._low = np.flatnonzero(~self._top)
        self._high = np.flatnonzero(self._top)
        self._pidx_low = self._pidx[self._low]
        self._pidx_high = self._pidx[self._high]
        xk = np.maximum(x[ck], 1)
        self._qold = np.where(ck > 0, (x[cz] - cd) / xk, 0.0)
        self._qnew = 1.0 - self._qold
        d = np.arange(D)
        self._D = D
        self._x = x
        self._d = d
        self._exp0 = np.maximum(x[:, None] - d[None, :], 0)
        self._exp1 = np.maximum(x[:, None] - 1 - d[None, :], 0)
        self._cache = {}
        self._comb = comb(x[:, None], d[None, :])
        self._comb1 = comb(np.maximum(x - 1, 0)[:, None], d[None, :])
        self._dmask = d[None, :] <= x[:, None]
        self._dmask1 = d[None, :] <= (x - 1)[:, None]
        self._m = np.clip(N + d[None, :] - np.arange(Z)[:, None], 0, N)
        self._wait = -spec.c_W * np.maximum(np.arange(Z) - spec.n, 0)
        self._above = np.arange(Z) > spec.penalty.zhat
        self._prices = np.asarray(spec.prices)
        self._pmf, self._surv, self._te = C.poisson_tables(spec.lam, N)
        # TE[t, a, z, d] gathered at m = N + d - z
        self._te_zd = self._te[:, :, self._m]

    # -- per-period building blocks ------------------------------------------
    def _split(self, mu, pi):
        spec = self.spec
        mu2 = mu.reshape(spec.n_counters, spec.n_labels)
        mz = mu2.sum(axis=1)
        live = mz > 0
        xi = np.where(live[:, None], mu2 / np.where(live, mz, 1.0)[:, None], spec.g[None, :])
        theta = pi.reshape(spec.n_counters, spec.n_labels, -1)[:, 0, :]
        return mz, live, xi, theta

    def _binomial(self, p1):
        x = self._x
        p = p1[:, None]
        pd = p ** self._d
        q = 1 - p
        qd = np.where(self._dmask, self._comb * pd * q ** self._exp0, 0.0)
        # d/dp of Binomial(x, p) at d: x [B(d-1; x-1, p) - B(d; x-1, p)]
        b1 = np.where(self._dmask1, self._comb1 * pd * q ** self._exp1, 0.0)
        shifted = np.zeros_like(b1)
        shifted[:, 1:] = b1[:, :-1]
        dqd = x[:, None] * (shifted - b1)
        return qd, dqd

    def _old_labels(self, xi, p1):
        ok = p1 < 1
        lold = np.zeros_like(xi)
        lold[ok, :-1] = xi[ok, 1:] / (1 - p1[ok])[:, None]
        return lold, ok

    def _factors(self, t, mu, pi):
        # forward, reward and backward passes at epoch t usually share (mu, pi)
        hit = self._cache.get(t)
        if hit is not None and np.array_equal(hit[0], mu) and np.array_equal(hit[1], pi):
            return hit[2]
        f = self._compute_factors(t, mu, pi)
        self._cache[t] = (np.array(mu), np.array(pi), f)
        return f

    def _compute_factors(self, t, mu, pi):
        mz, live, xi, theta = self._split(mu, pi)
        p1 = xi[:, 0]
        qd, dqd = self._binomial(p1)
        Z, N = self.spec.n_counters, self.spec.capacity
        mix_p = (theta @ self._pmf[t]).reshape(-1)
        mix_s = (theta @ self._surv[t]).reshape(-1)
        qth = np.where(self._top, mix_s[self._pidx], mix_p[self._pidx])
        base = qd[self._cz, self._cd] * qth
        f_new = np.bincount(self._pair, base * self._qnew, Z * Z).reshape(Z, Z)
        f_old = np.bincount(self._pair, base * self._qold, Z * Z).reshape(Z, Z)
        lold, old_ok = self._old_labels(xi, p1)
        return dict(mz=mz, live=live, xi=xi, theta=theta, p1=p1, qd=qd, dqd=dqd, qth=qth,
                    f_new=f_new, f_old=f_old, lold=lold, old_ok=old_ok)

    def _revenue(self, t, qd):
        """r-hat revenue part, shape (Z, A)."""
        return self._prices[None, :] * np.einsum("zd,azd->za", qd, self._te_zd[t])

    def _penalty(self, t, mz):
        spec = self.spec
        if not spec.penalized(t):
            return 0.0, 0.0
        v = mz[self._above].sum() - spec.penalty.alpha
        if v <= 0:
            return 0.0, 0.0
        k = spec.penalty.k
        return -spec.penalty.C * v ** k, -spec.penalty.C * k * v ** (k - 1)

    # -- engine hooks -----------------------------------------------------------
    def step_forward(self, t, mu, pi):
        f = self._factors(t, mu, pi)
        spec = self.spec
        mz = f["mz"]
        nxt = np.outer(mz @ f["f_new"], spec.g) + (mz[:, None] * f["f_old"]).T @ f["lold"]
        return as_pmf(nxt.reshape(-1), what=f"marginal at t={t + 1}")

    def step_reward(self, t, mu, pi):
        f = self._factors(t, mu, pi)
        mz, theta = f["mz"], f["theta"]
        rev = np.sum(mz[:, None] * theta * self._revenue(t, f["qd"]))
        return {"revenue": float(rev), "waiting": float(mz @ self._wait),
                "penalty": float(self._penalty(t, mz)[0])}

    def terminal_value(self, mu):
        mz = mu.reshape(self.spec.n_counters, -1).sum(axis=1)
        return {"terminal": float(-self.spec.c_T * (mz @ np.arange(mz.size))),
                "penalty": float(self._penalty(self.horizon, mz)[0])}

    def terminal_sigma(self, mu):
        spec = self.spec
        mz = mu.reshape(spec.n_counters, -1).sum(axis=1)
        c, slope = self._penalty(self.horizon, mz)
        per_z = c + slope * self._above - spec.c_T * np.arange(spec.n_counters)
        return np.repeat(per_z, spec.n_labels)

    def sigma_step(self, t, mu, pi, sigma_next):
        """Return (sigma^(t) as (Z, L), Q-hat as (Z, A), penalty constant c)."""
        spec = self.spec
        Z, L, N = spec.n_counters, spec.n_labels, spec.capacity
        f = self._factors(t, mu, pi)
        s2 = sigma_next.reshape(Z, L)
        theta, qd, dqd, p1 = f["theta"], f["qd"], f["dqd"], f["p1"]
        b_new = s2 @ spec.g
        b_old = f["lold"] @ s2.T
        cz, cd, ck = self._cz, self._cd, self._ck
        B = self._qnew * b_new[ck] + self._qold * b_old[cz, ck]
        W = qd[cz, cd] * B
        Wy = np.bincount(self._pidx_low, W[self._low], Z * (N + 1)).reshape(Z, N + 1)
        Ws = np.bincount(self._pidx_high, W[self._high], Z * (N + 1)).reshape(Z, N + 1)
        rev = self._revenue(t, qd)
        qhat = rev + self._wait[:, None] + Wy @ self._pmf[t].T + Ws @ self._surv[t].T
        # centered xi-derivatives: departures factor (label 1 direction)
        d_rev = np.sum(theta * self._prices[None, :] * np.einsum("zd,azd->za", dqd, self._te_zd[t]),
                       axis=1)
        d_trans = np.bincount(cz, dqd[cz, cd] * f["qth"] * B, Z)
        lead = np.zeros((Z, L))
        lead[:, 0] = 1.0
        cent = (lead - p1[:, None]) * (d_rev + d_trans)[:, None]
        # old-label shift factor (labels > 1)
        f_old = f["f_old"]
        shift = np.zeros((Z, L))
        ok = f["old_ok"]
        shift[:, 1:] = (f_old @ s2)[:, :-1] - np.sum(f_old * b_old, axis=1)[:, None]
        shift[ok] /= (1 - p1[ok])[:, None]
        shift[~ok] = 0.0
        c, slope = self._penalty(t, f["mz"])
        sigma = (c + slope * self._above + np.sum(theta * qhat, axis=1))[:, None] \
            + np.where(f["live"][:, None], cent + shift, 0.0)
        return sigma, qhat, c

    def step_sigma(self, t, mu, pi, sigma_next):
        sigma, qhat, c = self.sigma_step(t, mu, pi, sigma_next)
        q = np.repeat(qhat + c, self.spec.n_labels, axis=0)
        return sigma.reshape(-1), q

    # -- dense interface (small instances only) ------------------------------
    def kernel(self, t, mu):
        return NaivePricingModel(self.spec).kernel(t, mu)

    def reward(self, t, mu):
        return NaivePricingModel(self.spec).reward(t, mu)

    def terminal_reward(self, mu):
        return NaivePricingModel(self.spec).terminal_reward(mu)


def efficient_sigma_step(spec, t, mu_t, theta_t, sigma_next, model=None):
    """sigma^(t) over (z, l) and Q-hat^(t)(z, a) for counter-based action pmfs theta_t (Z, A)."""
    model = PricingModel(spec) if model is None else model
    pi = np.repeat(np.asarray(theta_t), spec.n_labels, axis=0)
    sigma, qhat, _ = model.sigma_step(t, np.asarray(mu_t).reshape(-1), pi,
                                      np.asarray(sigma_next).reshape(-1))
    return sigma, qhat


class NaivePricingModel(_PricingBase):
    """Dense reference implementation built from the direct per-(z, a) formulas."""

    step_h = 1e-30

    def _rows(self, t, mu, z):
        return np.stack([C.kernel(self.spec, t, mu, z, a) for a in range(self.n_actions)])

    def kernel(self, t, mu):
        spec = self.spec
        rows = np.stack([self._rows(t, mu, z) for z in range(spec.n_counters)])
        return np.repeat(rows, spec.n_labels, axis=0)

    def _reward_parts(self, t, mu):
        spec = self.spec
        parts = {"revenue": np.zeros((spec.n_counters, self.n_actions), dtype=np.result_type(mu, float)),
                 "waiting": np.zeros((spec.n_counters, self.n_actions))}
        for z in range(spec.n_counters):
            for a in range(self.n_actions):
                r = C.reward(spec, t, mu, z, a)
                parts["revenue"][z, a] = r["revenue"]
                parts["waiting"][z, a] = r["waiting"]
        parts["penalty"] = np.full((spec.n_counters, self.n_actions), C.penalty_value(spec, mu, t))
        return {k: np.repeat(v, spec.n_labels, axis=0) for k, v in parts.items()}

    def reward_components(self, t, mu):
        return self._reward_parts(t, mu)

    def reward(self, t, mu):
        return sum(self._reward_parts(t, mu).values())

    def terminal_components(self, mu):
        spec = self.spec
        z = spec.counter_of_state()
        return {"terminal": -spec.c_T * z.astype(float),
                "penalty": np.full(spec.n_states, C.penalty_value(spec, mu, spec.horizon))}

    def terminal_reward(self, mu):
        return sum(self.terminal_components(mu).values())

    def _perturbed(self, mu, j):
        m = np.asarray(mu, dtype=complex).copy()
        m[j] += 1j * self.step_h
        return m

    def kernel_mu_partial(self, t, mu):
        spec = self.spec
        L, S = spec.n_labels, spec.n_states
        out = np.zeros((S, self.n_actions, S, S))
        mz = mu.reshape(spec.n_counters, L).sum(axis=1)
        for j in range(S):
            z = j // L
            if mz[z] <= 0:
                continue
            rows = self._rows(t, self._perturbed(mu, j), z).imag / self.step_h
            out[z * L:(z + 1) * L, :, :, j] = rows[None]
        return out

    def reward_mu_partial(self, t, mu):
        spec = self.spec
        L, S = spec.n_labels, spec.n_states
        out = np.zeros((S, self.n_actions, S))
        mz = mu.reshape(spec.n_counters, L).sum(axis=1)
        for j in range(S):
            z = j // L
            mc = self._perturbed(mu, j)
            out[:, :, j] = np.imag(C.penalty_value(spec, mc, t)) / self.step_h
            if mz[z] <= 0:
                continue
            rev = np.array([C.reward(spec, t, mc, z, a)["revenue"] for a in range(self.n_actions)])
            out[z * L:(z + 1) * L, :, j] += rev.imag[None, :] / self.step_h
        return out

    def terminal_mu_partial(self, mu):
        spec = self.spec
        S = spec.n_states
        out = np.zeros((S, S))
        for j in range(S):
            out[:, j] = np.imag(C.penalty_value(spec, self._perturbed(mu, j), spec.horizon)) / self.step_h
        return out
