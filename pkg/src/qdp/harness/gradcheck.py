"""Derivative and equivalence checks against brute-force references."""
from dataclasses import dataclass, field

import numpy as np

from qdp.nlmdp.fisher import fisher_blocks
from qdp.nlmdp.model import DenseModel
from qdp.nlmdp.oracles import (enumeration_fisher, fd_policy_gradient, random_model,
                               random_policy, tangent_projection)
from qdp.nlmdp.schemes import backward_sigma, forward_marginals, policy_gradient
from qdp.pricing.model import NaivePricingModel, PricingModel
from qdp.pricing.spec import make_spec

GRAD_TOL = 1e-6
FISHER_TOL = 1e-10
EQUIV_TOL = 1e-10


@dataclass(frozen=True)
class Check:
    name: str
    error: float
    tol: float
    where: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.error) and self.error <= self.tol)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        loc = f" at {self.where}" if self.where else ""
        return f"{flag} {self.name}: max error {self.error:.3e} (tol {self.tol:.0e}){loc}"


@dataclass
class Report:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def lines(self):
        return [c.line() for c in self.checks]


def gradient_error(model, policy, mu0, h=1e-5):
    """Normwise relative error of the backward-scheme gradient vs central differences."""
    trace = forward_marginals(model, policy, mu0)
    grad = policy_gradient(model, policy, trace, backward_sigma(model, policy, trace))
    fd = fd_policy_gradient(model, policy, mu0, h)
    diff = np.abs(tangent_projection(grad) - fd)
    scale = max(np.abs(fd).max(), 1e-12)
    idx = np.unravel_index(np.argmax(diff), diff.shape)
    return float(diff.max() / scale), idx


def random_instance(rng, max_T=5, max_S=4, max_A=3, model_factory=random_model):
    T = int(rng.integers(1, max_T + 1))
    S = int(rng.integers(1, max_S + 1))
    A = int(rng.integers(2, max_A + 1))
    model = model_factory(rng, T, S, A)
    policy = random_policy(rng, T, S, A)
    mu0 = rng.dirichlet(np.ones(S))
    return model, policy, mu0


def check_gradients(trials, seed, model_factory=random_model):
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for k in range(trials):
        model, policy, mu0 = random_instance(rng, model_factory=model_factory)
        err, idx = gradient_error(model, policy, mu0)
        if not err <= worst:
            worst, where = err, f"trial {k}, (t, z, a) = {tuple(int(i) for i in idx)}"
    return Check("policy gradient vs finite differences", worst, GRAD_TOL, where)


def check_fisher(trials, seed):
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for k in range(trials):
        model = random_model(rng, 2, 2, 2)
        policy = random_policy(rng, 2, 2, 2)
        mu0 = rng.dirichlet(np.ones(2))
        trace = forward_marginals(model, policy, mu0)
        F = fisher_blocks(model, policy, trace).assemble()
        err = float(np.abs(F - enumeration_fisher(model, policy, mu0)).max())
        if not err <= worst:
            worst, where = err, f"trial {k}"
    return Check("Fisher blocks vs trajectory enumeration", worst, FISHER_TOL, where)


def check_pricing_equivalence(spec, seed, episodes=2):
    """Efficient vs naive backward recursion on random interior count policies."""
    rng = np.random.default_rng(seed)
    fast, naive = PricingModel(spec), NaivePricingModel(spec)
    worst, where = 0.0, ""
    for k in range(episodes):
        theta = rng.dirichlet(np.ones(spec.n_actions), size=(spec.horizon, spec.n_counters))
        policy = fast.counter_policy(0.5 * theta + 0.5 / spec.n_actions)
        trace = forward_marginals(fast, policy, fast.initial_marginal())
        a = backward_sigma(fast, policy, trace).sigma
        b = backward_sigma(naive, policy, trace).sigma
        live = np.asarray(trace.mu) > 0
        diff = np.where(live, np.abs(np.asarray(a) - np.asarray(b)), 0.0)
        err = float(diff.max())
        if not err <= worst:
            t, s = np.unravel_index(np.argmax(diff), diff.shape)
            worst, where = err, f"policy {k}, t={t}, (z, l)=({s // spec.n_labels}, {s % spec.n_labels + 1})"
    return Check("efficient vs naive sigma", worst, EQUIV_TOL, where)


def corrupted_model_factory(scale=1.01):
    """Random models whose reward mu-partials are deliberately off by ``scale``."""
    def factory(rng, T, S, A):
        m = random_model(rng, T, S, A)
        return DenseModel(T, S, A, m.kernel, m.reward, m.terminal_reward,
                          m.kernel_mu_partial,
                          lambda t, mu: scale * m.reward_mu_partial(t, mu),
                          m.terminal_mu_partial)
    return factory


def default_pricing_spec():
    return make_spec(2, 1, 6, [0.2, 0.3, 0.5], "DEC", c_W=0.1, c_T=1.0)


def run_suite(trials=20, seed=0, spec=None, corrupt=False):
    """Gradient, Fisher and pricing-equivalence checks in one report."""
    factory = corrupted_model_factory() if corrupt else random_model
    rep = Report()
    rep.checks.append(check_gradients(trials, seed, factory))
    rep.checks.append(check_fisher(max(1, trials // 4), seed + 1))
    rep.checks.append(check_pricing_equivalence(spec or default_pricing_spec(), seed + 2))
    return rep
