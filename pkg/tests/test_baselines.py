import itertools

import numpy as np
import pytest

from qdp.baselines.fullinfo import (bellman_evaluate, bellman_optimal, build_fullinfo,
                                    compare_centered, extract_count_policy, fullinfo_state_count,
                                    q_extract, q_extract_diagnostic, state_distributions)
from qdp.baselines.geometric import GeometricCountModel, geometric_evaluate, geometric_exact
from qdp.baselines.qlearn import greedy_actions, qlearn_aggregated, td_update
from qdp.errors import ResourceGuardError, UnsupportedModelError
from qdp.nlmdp import backward_sigma
from qdp.policy.optimizer import qbar
from qdp.harness.runs import qplex_value
from qdp.pricing.model import PricingModel
from qdp.pricing.spec import Penalty, PricingSpec, make_spec


def _small(n=1, b=1, T=2, g=(0.4, 0.6), shape="DEC", prices=(0.4, 1.1), **kw):
    return make_spec(n, b, T, list(g), shape, c_W=kw.get("c_W", 0.1), c_T=kw.get("c_T", 1.0),
                     prices=prices)


def _geometric_pmf(p, L):
    g = p * (1 - p) ** np.arange(L)
    return g / g.sum()


# -- state space -------------------------------------------------------------
def test_state_counts():
    spec = make_spec(1, 0, 1, [0.5, 0.5], "CON")
    m = build_fullinfo(spec)
    assert m.n_states == fullinfo_state_count(spec) == 3
    assert np.sum(m.z == 0) == 1 and np.all(m.h[m.z == 0] == 0)
    big = make_spec(3, 2, 1, "Uni", "CON")
    assert fullinfo_state_count(big) == 1 + 20 + 210 + 3 * 1540
    assert np.all(m.h.sum(axis=1) == np.minimum(m.z, 1))


def test_state_guard():
    with pytest.raises(ResourceGuardError):
        build_fullinfo(make_spec(3, 3, 1, "Uni", "CON"), guard=1000)


def test_transition_rows_sum_to_one():
    spec = make_spec(2, 2, 3, "BB", "ALT")
    m = build_fullinfo(spec)
    assert np.abs(np.asarray(m.W.sum(axis=1)).ravel() - 1).max() < 1e-12
    for t in range(3):
        rowsum = m.q_values(t, np.ones(m.n_states)) - m.reward(t)
        assert np.abs(rowsum - 1).max() < 1e-12


# -- Bellman -------------------------------------------------------------------
def test_zero_rewards_zero_values():
    spec = PricingSpec(1, 1, 3, (0.5, 1.1), [0.5, 0.5], np.zeros((3, 2)))
    sol = bellman_optimal(build_fullinfo(spec))
    assert np.all(sol.values == 0)


def test_one_step_values():
    spec = _small(T=1)
    m = build_fullinfo(spec)
    sol = bellman_optimal(m)
    r = m.reward(0)
    expect = np.max(r + (m.gather @ (m.routing(0) * (m.W @ m.terminal())[:, None])), axis=1)
    assert np.allclose(sol.values[0], expect, atol=1e-14)


def _policy_value(m, acts):
    """Forward evaluation of a state-dependent action table (T, S)."""
    T, A = m.spec.horizon, m.spec.n_actions
    pis = [np.eye(A)[a] for a in acts]
    mus = state_distributions(m, pis)
    total = sum(mus[t] @ m.reward(t)[np.arange(m.n_states), acts[t]] for t in range(T))
    return total + mus[T] @ m.terminal()


def test_bellman_matches_policy_enumeration():
    m = build_fullinfo(_small(T=2))
    best = -np.inf
    S = m.n_states
    for flat in itertools.product(range(2), repeat=2 * S):
        best = max(best, _policy_value(m, np.array(flat).reshape(2, S)))
    assert abs(bellman_optimal(m).value - best) < 1e-12


def test_bellman_evaluate_consistency():
    spec = make_spec(2, 1, 6, [0.2, 0.3, 0.5], "INC", c_W=0.1, c_T=1.0)
    m = build_fullinfo(spec)
    sol = bellman_optimal(m)
    assert abs(_policy_value(m, sol.actions) - sol.value) < 1e-12
    reject = np.full((6, spec.n_counters), spec.reject_action())
    free = spec.replace(c_W=0.0, c_T=0.0)
    assert bellman_evaluate(build_fullinfo(free), reject) == 0.0
    acts = np.random.default_rng(3).integers(0, spec.n_actions, size=(6, spec.n_counters))
    assert abs(bellman_evaluate(m, acts) - _policy_value(m, acts[:, m.z])) < 1e-12
    assert bellman_evaluate(m, acts) <= sol.value + 1e-12


def test_qplex_close_to_exact_for_count_policies():
    spec = make_spec(3, 3, 12, "UniM", "DEC", c_W=0.05, c_T=1.5)
    m = build_fullinfo(spec)
    model = PricingModel(spec)
    rng = np.random.default_rng(7)
    for _ in range(3):
        acts = rng.integers(0, spec.n_actions, size=(12, spec.n_counters))
        pure = model.counter_policy(np.eye(spec.n_actions)[acts])
        qv = qplex_value(model, pure)[0].total
        ex = bellman_evaluate(m, acts)
        assert abs(qv - ex) / abs(ex) <= 0.01


# -- extraction ------------------------------------------------------------------
def test_extraction_single_histogram_case():
    spec = make_spec(1, 2, 6, [1.0], "DEC", c_W=0.1, c_T=1.0)
    m = build_fullinfo(spec)
    sol = bellman_optimal(m)
    acts, v = extract_count_policy(m, sol)
    assert abs(v - sol.value) < 1e-12
    mus = state_distributions(m, [np.eye(spec.n_actions)[a] for a in sol.actions])
    for t in range(6):
        live = mus[t] > 0
        assert np.array_equal(acts[t][m.z[live]], sol.actions[t][live])


def test_extraction_floor_and_unreachable():
    spec = make_spec(2, 1, 6, [0.2, 0.3, 0.5], "DEC", c_W=0.1, c_T=1.0)
    m = build_fullinfo(spec)
    acts, v = extract_count_policy(m, bellman_optimal(m))
    reject = np.full((6, spec.n_counters), spec.reject_action())
    assert v >= bellman_evaluate(m, reject)
    assert abs(bellman_evaluate(m, acts) - v) < 1e-12
    # counters above 0 cannot be reached at t = 0
    assert np.all(acts[0, 1:] == 0)


# -- Q diagnostic ------------------------------------------------------------------
def test_compare_identical():
    q = np.random.default_rng(0).normal(size=(3, 4, 5))
    c = compare_centered(q, q, np.ones((3, 4), dtype=bool))
    assert abs(c.cosine - 1) < 1e-15 and abs(c.norm_ratio - 1) < 1e-15


def test_q_diagnostic_markov_case():
    spec = make_spec(2, 2, 5, [1.0], "ALT", c_W=0.1, c_T=1.0)
    model = PricingModel(spec)
    theta = np.random.default_rng(1).dirichlet(np.ones(spec.n_actions), size=(5, spec.n_counters))
    pol = model.counter_policy(theta)
    _, trace = qplex_value(model, pol)
    qb = qbar(trace, model, backward_sigma(model, pol, trace), pol)
    m = build_fullinfo(spec)
    res = q_extract_diagnostic(m, theta, qb)
    assert abs(res.cosine - 1) < 1e-10 and abs(res.norm_ratio - 1) < 1e-10
    qe, mass = q_extract(m, theta)
    assert np.all(qe[mass == 0] == 0)


# -- geometric -------------------------------------------------------------------
def test_geometric_model_basics():
    spec = make_spec(3, 2, 4, "geometric:10.5", "DEC", c_W=0.1, c_T=1.0)
    gm = GeometricCountModel(spec)
    assert gm.p == spec.g[0]
    assert np.allclose(gm.B.sum(axis=1), 1, atol=1e-14)
    for t in range(4):
        assert np.abs(gm.routing(t).sum(axis=2) - 1).max() < 1e-12
    with pytest.raises(UnsupportedModelError):
        GeometricCountModel(spec.replace(penalty=Penalty(C=1.0)))


def test_geometric_count_mdp_matches_full_information():
    # nearly untruncated geometric: count policies are then valued exactly by the count MDP
    spec = make_spec(2, 1, 8, list(_geometric_pmf(0.7, 14)), "INC", c_W=0.1, c_T=1.0)
    m = build_fullinfo(spec)
    sol = geometric_exact(spec, p=0.7)
    assert abs(bellman_evaluate(m, sol.actions) - sol.value) < 1e-5
    # knowing the drawn remaining durations is worth more than the count alone
    assert bellman_optimal(m).value >= sol.value
    acts = np.random.default_rng(2).integers(0, spec.n_actions, size=(8, spec.n_counters))
    assert abs(geometric_evaluate(spec, acts, p=0.7) - bellman_evaluate(m, acts)) < 1e-5


def test_geometric_exact_is_optimal_among_evaluations():
    spec = make_spec(3, 2, 10, "geometric:5", "DEC", c_W=0.1, c_T=1.0)
    sol = geometric_exact(spec)
    assert abs(geometric_evaluate(spec, sol.actions) - sol.value) < 1e-12
    rng = np.random.default_rng(4)
    for _ in range(5):
        acts = rng.integers(0, spec.n_actions, size=(10, spec.n_counters))
        assert geometric_evaluate(spec, acts) <= sol.value + 1e-12


# -- Q-learning ------------------------------------------------------------------
def test_td_zero_rewards_keep_zero():
    q = np.zeros((3, 2, 2))
    zs = np.random.default_rng(0).integers(0, 2, size=(50, 4))
    acts = np.random.default_rng(1).integers(0, 2, size=(50, 3))
    td_update(q, zs, acts, np.zeros((50, 3)), 0.0, 0.1)
    assert np.all(q == 0)


def test_td_bandit_fixed_point():
    alpha, r, n = 0.1, 2.5, 200
    q = np.zeros((1, 1, 1))
    td_update(q, np.zeros((n, 2)), np.zeros((n, 1)), np.full((n, 1), r), 0.0, alpha)
    assert abs(q[0, 0, 0] - r * (1 - (1 - alpha) ** n)) < 1e-12
    assert abs(q[0, 0, 0] - r) < 1e-8
    assert np.array_equal(greedy_actions(np.array([[[0.0, 1.0], [2.0, 2.0]]])), [[1, 0]])


def test_qlearn_run_shape():
    spec = make_spec(2, 1, 6, [0.2, 0.3, 0.5], "DEC", c_W=0.1, c_T=1.0)
    # checkpoints fall on whole simulator blocks: 8192, 16384 and the final 20000
    res = qlearn_aggregated(spec, [0.1, 0.05], 20_000, 5000, 2000, seed=0)
    assert [c[0] for c in res.curves] == [8192, 8192, 16384, 16384, 20_000, 20_000]
    assert res.best_rate in (0.1, 0.05)
    assert res.best_value == max(c[2] for c in res.curves)
    assert res.best_actions.shape == (6, spec.n_counters)
    again = qlearn_aggregated(spec, [0.1, 0.05], 20_000, 5000, 2000, seed=0)
    assert again.curves == res.curves
    with pytest.raises(ValueError):
        qlearn_aggregated(spec.replace(penalty=Penalty(C=1.0)), [0.1], 10, 10, 10, 0)
