"""Chain-rule factors of the QPLEX pricing kernel and the rewards.

These are the direct, per-(z, a) forms. They accept complex marginals so
the naive model can differentiate them by complex step. The fast
vectorized recursion lives in ``qdp.pricing.model``.
"""
from functools import lru_cache

import numpy as np
from scipy.special import comb
from scipy.stats import poisson

from qdp.errors import PolicyDomainError


# -- Poisson pieces --------------------------------------------------------
def poisson_tables(lam, top):
    """Point masses P[Y=y], survival P[Y>=m] and E[min(Y, m)] for y, m = 0..top.

    ``lam`` may be an array; tables get a trailing axis of length top+1.
    """
    lam = np.asarray(lam, dtype=float)
    k = np.arange(top + 1)
    pmf = poisson.pmf(k, lam[..., None])
    surv = poisson.sf(k - 1, lam[..., None])
    pmf = np.where(lam[..., None] == 0, (k == 0).astype(float), pmf)
    surv = np.where(lam[..., None] == 0, (k == 0).astype(float), surv)
    trunc_mean = np.concatenate([np.zeros(lam.shape + (1,)), np.cumsum(surv[..., 1:], axis=-1)],
                                axis=-1)
    return pmf, surv, trunc_mean


@lru_cache(maxsize=4096)
def _scalar_tables(lam, top):
    return tuple(np.asarray(a)[...] for a in poisson_tables(lam, top))


def truncated_mean(lam, m):
    """E[min(Y, m)] = sum_{j=1..m} P[Y >= j] for Y ~ Poisson(lam)."""
    return float(poisson_tables(lam, m)[2][m])


# -- label conditional ----------------------------------------------------
def label_conditional(spec, mu, z):
    """mu(z, .)/mu(z), falling back to g for an unreachable counter."""
    row = np.asarray(mu).reshape(spec.n_counters, spec.n_labels)[z]
    mass = row.sum()
    if mass.real > 0:
        return row / mass
    return spec.g.astype(row.dtype)


def departures_pmf(xi, x):
    """Binomial(x, xi(1)) over d = 0..x."""
    d = np.arange(x + 1)
    p = xi[0]
    return comb(x, d) * p ** d * (1 - p) ** (x - d)


def routing_pmf(spec, t, z, d, a):
    """Distribution of the next counter z' given z, d departures and price index a."""
    N = spec.capacity
    pmf, surv, _ = _scalar_tables(float(spec.lam[t, a]), N)
    out = np.zeros(N + 1)
    zp = np.arange(N)
    y = zp + d - z
    ok = y >= 0
    out[:N][ok] = pmf[y[ok]]
    out[N] = surv[N + d - z]
    return out


def type_pmf(spec, z, d, zp):
    """(new, old) probabilities for the label-carrying customer at counter z'."""
    x = spec.x
    if zp == 0:
        return 1.0, 0.0
    old = (x[z] - d) / x[zp]
    return 1.0 - old, old


def label_pmf(xi, kind, g):
    """Label distribution of the tracked customer: g if new, shifted xi if old."""
    if kind == "new":
        return np.asarray(g)
    p1 = xi[0]
    if p1 == 1:
        raise PolicyDomainError("old-type label pmf undefined when xi(1) = 1")
    out = np.zeros_like(xi)
    out[:-1] = xi[1:] / (1 - p1)
    return out


def kernel(spec, t, mu, z, a):
    """p-hat(z', l' | z, a) as a flat pmf over states (independent of the input label)."""
    xi = label_conditional(spec, mu, z)
    x = spec.x
    qd = departures_pmf(xi, x[z])
    old_ok = xi[0].real < 1
    lold = label_pmf(xi, "old", spec.g) if old_ok else np.zeros_like(xi)
    out = np.zeros((spec.n_counters, spec.n_labels), dtype=np.result_type(xi, float))
    zp = np.arange(1, spec.n_counters)
    for d in range(x[z] + 1):
        rho = routing_pmf(spec, t, z, d, a)
        old = np.zeros(spec.n_counters)
        old[1:] = np.where(rho[1:] > 0, (x[z] - d) / x[zp], 0.0)
        out += (qd[d] * rho)[:, None] * ((1 - old)[:, None] * spec.g + old[:, None] * lold)
    return out.reshape(-1)


# -- rewards --------------------------------------------------------------
def violation(spec, mu):
    """P[z > zhat] - alpha for a state marginal (complex-safe)."""
    mz = np.asarray(mu).reshape(spec.n_counters, spec.n_labels).sum(axis=1)
    return mz[spec.penalty.zhat + 1:].sum() - spec.penalty.alpha


def penalty_value(spec, mu, t):
    """The chance-constraint penalty constant c_mu at epoch t (0 when inactive)."""
    if not spec.penalized(t):
        return 0.0
    v = violation(spec, mu)
    if v.real <= 0:
        return 0.0 * v
    return -spec.penalty.C * v ** spec.penalty.k


def penalty_slope(spec, mu, t):
    """d c_mu / d mu(z, l) for a counter z above the threshold (one-sided 0 at the kink)."""
    if not spec.penalized(t):
        return 0.0
    v = float(np.real(violation(spec, mu)))
    if v <= 0:
        return 0.0
    k = spec.penalty.k
    return -spec.penalty.C * k * v ** (k - 1)


def reward(spec, t, mu, z, a):
    """Per-period reward pieces at state (z, .) and price index a."""
    xi = label_conditional(spec, mu, z)
    x = spec.x
    qd = departures_pmf(xi, x[z])
    _, _, te = _scalar_tables(float(spec.lam[t, a]), spec.capacity)
    m = spec.capacity + np.arange(x[z] + 1) - z
    return {
        "revenue": spec.prices[a] * (qd @ te[m]),
        "waiting": -spec.c_W * max(0, z - spec.n),
        "penalty": penalty_value(spec, mu, t),
    }


def terminal_reward(spec, mu, z):
    return {"terminal": -spec.c_T * z, "penalty": penalty_value(spec, mu, spec.horizon)}
