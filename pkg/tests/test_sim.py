import numpy as np
import pytest

from qdp.baselines.fullinfo import bellman_evaluate, bellman_optimal, build_fullinfo, extract_count_policy
from qdp.errors import ConfigError, ResourceGuardError
from qdp.pricing.spec import Penalty, make_spec
from qdp.sim.des import block_rng, estimate_violations, run_block, simulate_policy, table_chooser
from qdp.sim.search import block_actions, exhaustive_restricted


def _spec(**kw):
    base = dict(c_W=0.1, c_T=1.0, penalty=Penalty(C=0.0, alpha=0.05, zhat=2))
    base.update(kw)
    return make_spec(2, 2, 8, [0.2, 0.3, 0.5], "DEC", **base)


def test_reject_always_is_zero():
    spec = _spec(c_W=0.0, c_T=0.0)
    acts = np.full((8, spec.n_counters), spec.reject_action())
    res = simulate_policy(spec, acts, 5000, seed=1)
    assert res.mean_reward == 0 and res.std_error == 0
    assert np.all(res.buffer_prob == 0)
    p, se = estimate_violations(spec, acts, 100, seed=1)
    assert np.all(p == 0) and np.all(se == 0)


def test_same_seed_is_bit_identical_across_threads():
    spec = _spec()
    acts = np.random.default_rng(0).integers(0, spec.n_actions, size=(8, spec.n_counters))
    a = simulate_policy(spec, acts, 20_000, seed=5)
    b = simulate_policy(spec, acts, 20_000, seed=5, threads=3)
    assert a.mean_reward == b.mean_reward and a.std_error == b.std_error
    assert np.array_equal(a.buffer_prob, b.buffer_prob)
    assert a.components == b.components
    c = simulate_policy(spec, acts, 20_000, seed=6)
    assert c.mean_reward != a.mean_reward


def test_conservation_per_replication():
    spec = _spec()
    a = 3
    acts = np.full((8, spec.n_counters), a)
    comps, _, (zs, _, rews) = run_block(spec, table_chooser(acts), 4000, block_rng(0, 0), record=True)
    admitted = comps["revenue"] / spec.prices[a]
    assert np.allclose(admitted, np.round(admitted), atol=1e-9)
    departed = admitted - zs[:, -1]
    assert np.all(departed >= -1e-9)
    assert np.allclose(comps["terminal"], -spec.c_T * zs[:, -1])
    assert np.allclose(rews.sum(axis=1), comps["revenue"] + comps["waiting"])


def test_simulation_matches_exact_values():
    spec = make_spec(2, 2, 10, [0.1, 0.3, 0.2, 0.4], "ALT", c_W=0.1, c_T=1.0)
    m = build_fullinfo(spec)
    acts, exact = extract_count_policy(m, bellman_optimal(m))
    res = simulate_policy(spec, acts, 200_000, seed=3)
    assert abs(res.mean_reward - exact) <= 4 * res.std_error
    rand = np.random.default_rng(9).integers(0, spec.n_actions, size=(10, spec.n_counters))
    res = simulate_policy(spec, rand, 200_000, seed=4)
    assert abs(res.mean_reward - bellman_evaluate(m, rand)) <= 4 * res.std_error


def test_overloaded_buffer_fills():
    spec = make_spec(2, 2, 20, [0.2, 0.3, 0.5], "CON", u_avg_max=10, penalty=Penalty(zhat=2))
    acts = np.zeros((20, spec.n_counters), dtype=int)
    res = simulate_policy(spec, acts, 5000, seed=0)
    assert res.buffer_prob[-1] > 0.95
    assert np.all((res.buffer_prob >= 0) & (res.buffer_prob <= 1))


def test_ci_is_three_standard_errors():
    spec = _spec()
    res = simulate_policy(spec, np.zeros((8, spec.n_counters), dtype=int), 1000, seed=0)
    assert res.ci_halfwidth == 3 * res.std_error
    with pytest.raises(ValueError):
        simulate_policy(spec, np.zeros((8, spec.n_counters), dtype=int), 0, seed=0)


# -- restricted search ---------------------------------------------------------
def test_block_actions():
    spec = _spec()
    acts = block_actions(spec, [(0, 1), (2, 4)], [3, 7])
    assert acts.shape == (8, 5) and np.array_equal(acts[0], [3, 3, 7, 7, 7])


def test_single_candidate():
    spec = _spec()
    rows = exhaustive_restricted(spec, [(0, 4)], [0.5], 2000, seed=0)
    assert len(rows) == 1 and rows[0].prices == (0.5,)


def test_dominated_price_does_not_change_winner():
    # without costs or a binding constraint, the reject price never pays
    spec = _spec(c_W=0.0, c_T=0.0, penalty=Penalty(zhat=4))
    blocks = [(0, 1), (2, 4)]
    base = exhaustive_restricted(spec, blocks, [0.5, 0.8], 5000, seed=0)
    more = exhaustive_restricted(spec, blocks, [0.5, 0.8, 1.1], 5000, seed=0)
    assert len(more) == 9
    assert more[0].prices == base[0].prices and more[0].mean == base[0].mean


def test_feasibility_and_reranking():
    spec = _spec()
    rows = exhaustive_restricted(spec, [(0, 1), (2, 4)], [0.2, 0.8, 1.1], 3000, seed=0, top_k=2,
                                 top_reps=6000)
    feas = [r.feasible for r in rows]
    assert feas == sorted(feas, reverse=True)
    assert all(r.max_violation <= 0.05 for r in rows if r.feasible)
    assert rows[0].reps == 6000


def test_search_guards():
    spec = _spec()
    with pytest.raises(ConfigError):
        exhaustive_restricted(spec, [(0, 2)], [0.5], 10, 0)
    with pytest.raises(ConfigError):
        exhaustive_restricted(spec, [(0, 4)], [0.55], 10, 0)
    with pytest.raises(ResourceGuardError):
        exhaustive_restricted(spec, [(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)], list(spec.prices), 10, 0,
                              guard=1000)
