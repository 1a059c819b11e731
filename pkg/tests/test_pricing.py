import numpy as np
import pytest
from scipy.stats import binom, poisson

from qdp.errors import ConfigError, PolicyDomainError
from qdp.nlmdp import backward_sigma, expected_total_reward, forward_marginals
from qdp.nlmdp.oracles import bellman_evaluation, fd_sigma
from qdp.pricing import components as C
from qdp.pricing.model import NaivePricingModel, PricingModel, efficient_sigma_step
from qdp.pricing.spec import (Penalty, PricingSpec, arrival_shape, build_arrival_table, make_spec,
                              service_pmf, truncated_geometric)


def _spec(n=2, b=1, T=3, g=(0.2, 0.3, 0.5), shape="DEC", **kw):
    return make_spec(n, b, T, list(g), shape, c_W=kw.pop("c_W", 0.1), c_T=kw.pop("c_T", 1.0), **kw)


def _random_mu(rng, spec, empty=()):
    mu = rng.dirichlet(np.ones(spec.n_states)).reshape(spec.n_counters, spec.n_labels)
    for z in empty:
        mu[z] = 0
    return (mu / mu.sum()).reshape(-1)


# -- arrival table and service pmfs ----------------------------------------
def test_arrival_table_examples():
    prices = [0.1, 0.5, 1.1]
    lam = build_arrival_table("CON", 5.0, 3, 10.5, prices, horizon=4)
    assert np.all(lam == lam[0])
    assert np.all(lam[:, 2] == 0)
    assert abs(lam[0, 0] - 10 / 7) < 1e-14


def test_shapes_average_to_one():
    for name in ("DEC", "INC", "ALT", "CON"):
        assert abs(arrival_shape(name, 30).mean() - 1) < 1e-14
    assert np.allclose(arrival_shape([1.0, 3.0], 2), [0.5, 1.5])
    with pytest.raises(ConfigError):
        arrival_shape([1.0, -1.0], 2)
    with pytest.raises(ConfigError):
        build_arrival_table("CON", 5.0, 3, 10.5, [0.1, 0.5], horizon=4)


def test_named_service_pmfs():
    assert abs(service_pmf("Uni") @ np.arange(1, 21) - 10.5) < 1e-12
    assert abs(service_pmf("UniM") @ np.arange(1, 21) - 15.5) < 1e-12
    assert abs(service_pmf("UniH") @ np.arange(1, 21) - 18.0) < 1e-12
    assert abs(service_pmf("BB") @ np.arange(1, 21) - 10.5) < 1e-12
    with pytest.raises(ConfigError):
        service_pmf("nope")


def test_truncated_geometric_matches_mean():
    for mean in (10.5, 15.5, 18.0):
        g = truncated_geometric(mean)
        ell = np.arange(1, g.size + 1)
        assert abs(g @ ell - mean) < 1e-9
        # memoryless up to truncation: constant ratio g(l+1)/g(l)
        ratio = g[1:] / g[:-1]
        assert np.allclose(ratio, ratio[0], rtol=1e-12)
        assert g[-1] / (1 - ratio[0]) * ratio[0] < 2e-6


def test_spec_validation():
    with pytest.raises(ConfigError):
        _spec(penalty=Penalty(C=1.0, zhat=9))
    with pytest.raises(ConfigError):
        PricingSpec(2, 1, 2, (0.5, 1.1), [1.0], np.zeros((3, 2)))


# -- chain-rule factors ------------------------------------------------------
def test_departures_pmf():
    assert np.array_equal(C.departures_pmf(np.array([0.3, 0.7]), 0), [1.0])
    assert np.allclose(C.departures_pmf(np.array([0.5, 0.5]), 2), [0.25, 0.5, 0.25], atol=1e-16)
    assert np.array_equal(C.departures_pmf(np.array([1.0, 0.0]), 3), [0, 0, 0, 1])


def _fixed_rate_spec(lam, n=1, b=1, T=1):
    return PricingSpec(n, b, T, (0.5, 1.1), [1.0], np.array([[lam, 0.0]] * T))


def test_routing_pmf():
    spec = _fixed_rate_spec(1.0)
    e = np.exp(-1)
    assert np.allclose(C.routing_pmf(spec, 0, 0, 0, 0), [e, e, 1 - 2 * e], atol=1e-15)
    assert np.array_equal(C.routing_pmf(spec, 0, 2, 1, 1), [0, 1, 0])
    big = _spec(n=3, b=3, T=4, g=service_pmf("Uni"))
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = int(rng.integers(0, big.n_counters))
        d = int(rng.integers(0, big.x[z] + 1))
        rho = C.routing_pmf(big, int(rng.integers(0, 4)), z, d, int(rng.integers(0, 11)))
        assert abs(rho.sum() - 1) < 1e-12 and rho.min() >= 0


def test_type_pmf():
    spec = _spec(n=3, b=3)
    assert C.type_pmf(spec, 2, 1, 0) == (1.0, 0.0)
    assert C.type_pmf(spec, 3, 3, 4) == (1.0, 0.0)
    new, old = C.type_pmf(spec, 3, 1, 4)
    assert abs(old - 2 / 3) < 1e-15 and abs(new - 1 / 3) < 1e-15


def test_label_pmf_worked_example():
    out = C.label_pmf(np.array([0.1, 0.2, 0.3, 0.4]), "old", None)
    assert np.abs(out - [2 / 9, 1 / 3, 4 / 9, 0]).max() <= 1e-15
    g = np.array([0.3, 0.7])
    assert np.array_equal(C.label_pmf(np.array([0.5, 0.5]), "new", g), g)
    xi = np.zeros(6)
    xi[4] = 1
    assert np.array_equal(C.label_pmf(xi, "old", None), [0, 0, 0, 1, 0, 0])
    with pytest.raises(PolicyDomainError):
        C.label_pmf(np.array([1.0, 0.0]), "old", None)


def _brute_kernel(spec, t, mu, z, a):
    """Four nested sums over d, z', k', l' straight from the definitions."""
    L, N, x = spec.n_labels, spec.capacity, spec.x
    mu2 = mu.reshape(spec.n_counters, L)
    xi = mu2[z] / mu2[z].sum() if mu2[z].sum() > 0 else spec.g
    lam = spec.lam[t, a]
    out = np.zeros((spec.n_counters, L))
    for d in range(x[z] + 1):
        qd = binom.pmf(d, x[z], xi[0])
        for zp in range(N + 1):
            y = zp + d - z
            if y < 0:
                continue
            rho = poisson.sf(y - 1, lam) if zp == N else poisson.pmf(y, lam)
            if lam == 0:
                rho = float(y == 0)
            old = 0.0 if zp == 0 else (x[z] - d) / x[zp]
            for kind, w in (("new", 1 - old), ("old", old)):
                if w == 0:
                    continue
                for lp in range(L):
                    lab = spec.g[lp] if kind == "new" else (xi[lp + 1] / (1 - xi[0]) if lp + 1 < L else 0.0)
                    out[zp, lp] += qd * rho * w * lab
    return out.reshape(-1)


def test_kernel_matches_brute_force(rng):
    spec = _spec(n=2, b=2, T=2, g=(0.1, 0.2, 0.3, 0.4))
    mu = _random_mu(rng, spec)
    for z in range(spec.n_counters):
        for a in range(spec.n_actions):
            assert np.abs(C.kernel(spec, 1, mu, z, a) - _brute_kernel(spec, 1, mu, z, a)).max() < 1e-14


def test_kernel_rows_are_stochastic(rng):
    spec = _spec(n=3, b=3, T=5, g=service_pmf("BB"))
    for _ in range(200):
        mu = _random_mu(rng, spec)
        row = C.kernel(spec, int(rng.integers(0, 5)), mu, int(rng.integers(0, 7)), int(rng.integers(0, 11)))
        assert abs(row.sum() - 1) <= 1e-12 and row.min() >= 0


def test_kernel_reward_and_q_ignore_input_label(rng):
    spec = _spec(n=2, b=1, T=2)
    mu = _random_mu(rng, spec)
    m = NaivePricingModel(spec)
    P, R = m.kernel(0, mu), m.reward(0, mu)
    L = spec.n_labels
    for z in range(spec.n_counters):
        block = slice(z * L, (z + 1) * L)
        assert np.all(P[block] == P[z * L]) and np.all(R[block] == R[z * L])
    fast = PricingModel(spec)
    pol = fast.uniform_policy()
    tr = forward_marginals(fast, pol, fast.initial_marginal())
    q = backward_sigma(fast, pol, tr).q
    assert np.all(q.reshape(2, spec.n_counters, L, -1) == q.reshape(2, spec.n_counters, L, -1)[:, :, :1])


def test_certain_completion_drops_old_branch(rng):
    spec = _spec(n=2, b=1, T=1)
    mu = np.zeros((spec.n_counters, spec.n_labels))
    mu[2, 0] = 1.0
    row = C.kernel(spec, 0, mu.reshape(-1), 2, 0).reshape(spec.n_counters, -1)
    # every customer in service completes, so each label is a fresh draw from g
    for zp in range(spec.n_counters):
        if row[zp].sum() > 0:
            assert np.allclose(row[zp] / row[zp].sum(), spec.g, atol=1e-15)


# -- rewards -----------------------------------------------------------------
def test_reward_examples(rng):
    spec = _spec(n=2, b=1)
    mu = _random_mu(rng, spec)
    r = C.reward(spec, 0, mu, 1, spec.reject_action())
    assert r["revenue"] == 0 and r["penalty"] == 0
    assert abs(C.truncated_mean(1.0, 1) - (1 - np.exp(-1))) < 1e-15
    assert C.reward(spec, 0, mu, 3, 0)["waiting"] == -0.1


def test_terminal_examples():
    spec = make_spec(3, 3, 2, "UniH", "CON", c_T=1.5)
    mu = np.zeros((spec.n_counters, spec.n_labels))
    mu[0, 0] = 1
    assert C.terminal_reward(spec, mu, 0) == {"terminal": -0.0, "penalty": 0.0}
    assert C.terminal_reward(spec, mu, 4)["terminal"] == -6.0
    pen = make_spec(3, 3, 2, "UniH", "CON", penalty=Penalty(C=100, k=1, alpha=0.05))
    mu = np.zeros((pen.n_counters, pen.n_labels))
    mu[0, 0] = 0.85
    mu[5, 3] = 0.15
    assert abs(C.terminal_reward(pen, mu.reshape(-1), 0)["penalty"] + 10.0) < 1e-12


def test_penalty_kink_has_zero_slope():
    pen = make_spec(1, 1, 1, [1.0], "CON", penalty=Penalty(C=100, k=2, alpha=0.25, zhat=1))
    mu = np.array([0.75, 0.0, 0.25])
    assert C.penalty_value(pen, mu, 1) == 0 and C.penalty_slope(pen, mu, 1) == 0
    mu = np.array([0.5, 0.0, 0.5])
    assert abs(C.penalty_slope(pen, mu, 1) + 100 * 2 * 0.25) < 1e-12
    assert C.penalty_value(pen, mu, 0) == 0


# -- efficient recursion -----------------------------------------------------
def _policy_and_trace(rng, spec):
    fast = PricingModel(spec)
    theta = rng.dirichlet(np.ones(spec.n_actions), size=(spec.horizon, spec.n_counters))
    pol = fast.counter_policy(theta)
    return fast, pol, forward_marginals(fast, pol, fast.initial_marginal())


@pytest.mark.parametrize("penalty", [None, Penalty(C=50, k=2, alpha=0.05, zhat=2)])
def test_efficient_matches_naive(rng, penalty):
    spec = _spec(n=2, b=2, T=5, g=(0.1, 0.2, 0.3, 0.4), penalty=penalty)
    fast, pol, tr = _policy_and_trace(rng, spec)
    naive = NaivePricingModel(spec)
    ntr = forward_marginals(naive, pol, naive.initial_marginal())
    assert np.abs(ntr.mu - tr.mu).max() < 1e-14
    a, b = backward_sigma(fast, pol, tr), backward_sigma(naive, pol, tr)
    live = tr.mu > 0
    assert np.abs(np.where(live, a.sigma - b.sigma, 0)).max() < 1e-10
    Jf = expected_total_reward(fast, pol, tr).total
    Jn = expected_total_reward(naive, pol, ntr).total
    assert abs(Jf - Jn) < 1e-12


def test_efficient_sigma_step_wrapper(rng):
    spec = _spec(n=2, b=1, T=3)
    fast, pol, tr = _policy_and_trace(rng, spec)
    sig = backward_sigma(fast, pol, tr)
    s1, qhat = efficient_sigma_step(spec, 1, tr.mu[1], pol.theta[1], sig.sigma[2])
    assert np.abs(s1.reshape(-1) - sig.sigma[1]).max() < 1e-14
    assert qhat.shape == (spec.n_counters, spec.n_actions)


def test_sigma_matches_finite_differences_in_mu(rng):
    spec = _spec(n=2, b=1, T=3, g=(0.2, 0.3, 0.5), penalty=Penalty(C=20, k=2, alpha=0.01, zhat=1))
    fast, pol, _ = _policy_and_trace(rng, spec)
    naive = NaivePricingModel(spec)
    for t in range(spec.horizon + 1):
        mu = _random_mu(rng, spec)
        fd = fd_sigma(naive, pol, mu, t)
        # backward pass with mu placed at epoch t
        mus = [mu]
        for tau in range(t, spec.horizon):
            mus.append(fast.step_forward(tau, mus[-1], pol.action_probs(tau)))
        sig = fast.terminal_sigma(mus[-1])
        for tau in range(spec.horizon - 1, t - 1, -1):
            sig, _ = fast.step_sigma(tau, mus[tau - t], pol.action_probs(tau), sig)
        assert np.abs(sig - fd).max() <= 1e-6 * max(1.0, np.abs(fd).max())


def test_binomial_derivative_matches_finite_differences(rng):
    fast = PricingModel(_spec(n=4, b=1))
    p = rng.uniform(0.05, 0.95, size=fast.spec.n_counters)
    h = 1e-6
    _, dqd = fast._binomial(p)
    fd = (fast._binomial(p + h)[0] - fast._binomial(p - h)[0]) / (2 * h)
    assert np.abs(dqd - fd).max() <= 1e-6 * np.abs(fd).max()


def test_conditional_gradient_lemma(rng):
    spec = _spec(n=2, b=1, g=(0.1, 0.2, 0.3, 0.4))
    L = spec.n_labels
    W = rng.normal(size=(L, L))

    def h(xi):
        return np.sin(xi @ W @ xi) + xi[0] ** 3

    def dh(xi):
        return np.cos(xi @ W @ xi) * ((W + W.T) @ xi) + np.eye(L)[0] * 3 * xi[0] ** 2

    mu = _random_mu(rng, spec)
    eps = 1e-6
    for zt in range(spec.n_counters):
        xi = C.label_conditional(spec, mu, zt)
        mz = mu.reshape(spec.n_counters, L)[zt].sum()
        g = dh(xi)
        cent = (g - xi @ g) / mz
        for j in range(spec.n_states):
            e = np.zeros_like(mu)
            e[j] = eps
            fd = (h(C.label_conditional(spec, mu + e, zt)) - h(C.label_conditional(spec, mu - e, zt))) / (2 * eps)
            expect = cent[j % L] if j // L == zt else 0.0
            assert abs(fd - expect) <= 1e-8 * max(1.0, abs(expect)) + 1e-9


def test_degenerate_service_reduces_to_count_mdp(rng):
    spec = make_spec(2, 2, 6, [1.0], "DEC", c_W=0.1, c_T=1.0)
    fast, pol, tr = _policy_and_trace(rng, spec)
    sig = backward_sigma(fast, pol, tr)
    V, Q = bellman_evaluation(NaivePricingModel(spec), pol, fast.initial_marginal())
    assert np.abs(sig.sigma - V).max() < 1e-12
    live = tr.mu[:-1] > 0
    assert np.abs(np.where(live[..., None], sig.q - Q, 0)).max() < 1e-12
