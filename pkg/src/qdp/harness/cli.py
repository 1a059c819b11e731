"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 invariant
failure, 3 resource guard refused the job.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from qdp.baselines.fullinfo import bellman_optimal, build_fullinfo, extract_count_policy
from qdp.baselines.geometric import geometric_exact
from qdp.baselines.qlearn import qlearn_aggregated
from qdp.errors import ConfigError, ModelContractError, NumericalDomainError, ResourceGuardError
from qdp.harness import gradcheck, io, plots
from qdp.harness.config import config_hash, load_config
from qdp.harness.design import ExperimentDesign, run_design
from qdp.harness.runs import (components_of, marginal_rows, parse_blocks, qplex_value,
                              sharing_from_blocks, trace_rows, train_qdp)
from qdp.policy.tabular import PartitionedPolicy
from qdp.pricing.model import PricingModel
from qdp.sim.des import simulate_policy
from qdp.sim.search import exhaustive_restricted

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_GUARD = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need_config(args):
    if not args.config:
        raise ConfigError("this command needs --config")
    return load_config(args.config)


def _emit(out, name, payload):
    with open(out / name, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    print(json.dumps(payload, sort_keys=True))


def _load_count_policy(path, spec):
    policy, prices, _ = io.load_policy(path)
    if policy.horizon != spec.horizon:
        raise ConfigError(f"policy horizon {policy.horizon} does not match T={spec.horizon}")
    if tuple(prices) != tuple(spec.prices):
        raise ConfigError("policy prices do not match the config price grid")
    if policy.assignment.shape != (spec.n_states,):
        raise ConfigError("policy state space does not match the config")
    return policy


# -- subcommands ------------------------------------------------------------
def cmd_train(args):
    cfg, spec = _need_config(args)
    out, h = _out(args), config_hash(cfg)
    sharing = sharing_from_blocks(parse_blocks(args.sharing), spec.horizon) if args.sharing else None
    etas = _floats(args.eta_sweep) if args.eta_sweep else [args.eta]
    summary = []
    for eta in etas:
        res = train_qdp(spec, eta, args.epsilon, args.max_episodes, args.adaptive, sharing)
        tag = "" if len(etas) == 1 else f"_eta{eta:g}"
        rows = trace_rows(res.trace)
        io.write_table(out / f"trace{tag}.csv", "trace", rows)
        io.save_policy(out / f"policy{tag}.json", res.trace.policy, spec.prices, h)
        io.save_policy(out / f"policy_pure{tag}.json", res.pure, spec.prices, h)
        io.write_table(out / f"policy_table{tag}.csv", "policy_table",
                       io.policy_rows(res.actions, spec.prices))
        plots.training_curve(rows, out / f"training{tag}.png")
        plots.policy_heatmap(res.actions, spec.prices, out / f"policy{tag}.png")
        summary.append({"eta": eta, "episodes": res.trace.episodes,
                        "converged": res.trace.converged, "J_final": res.trace.final_value,
                        "J_pure": res.pure_value.total, "components": components_of(res.pure_value),
                        "wall_time": res.wall_time})
    _emit(out, "train.json", {"config_hash": h, "runs": summary})
    return EXIT_OK


def cmd_eval(args):
    cfg, spec = _need_config(args)
    if not args.policy:
        raise ConfigError("eval needs --policy")
    out = _out(args)
    policy = _load_count_policy(args.policy, spec)
    dec, trace = qplex_value(PricingModel(spec), policy)
    if args.marginals:
        io.write_table(out / "marginals.csv", "marginals", marginal_rows(spec, trace))
    _emit(out, "eval.json", {"config_hash": config_hash(cfg), "J": dec.total,
                             "components": components_of(dec)})
    return EXIT_OK


def cmd_gradcheck(args):
    spec = _need_config(args)[1] if args.config else None
    if spec is not None and spec.n_states * spec.horizon > 20_000:
        raise ResourceGuardError("gradcheck instance (states x horizon)",
                                 spec.n_states * spec.horizon, 20_000)
    rep = gradcheck.run_suite(args.trials, args.seed, spec, corrupt=args.corrupt)
    for line in rep.lines():
        print(line)
    if args.out:
        out = _out(args)
        (out / "gradcheck.txt").write_text("\n".join(rep.lines()) + "\n")
    return EXIT_OK if rep.passed else EXIT_INVARIANT


def cmd_design(args):
    design = ExperimentDesign.load(args.design)
    if args.seed is not None:
        design.options["seed"] = args.seed
    records, summary = run_design(design, _out(args), args.parallel)
    bad = [r for r in records if r["status"] != "ok"]
    print(f"{len(summary)} cells, {len(records)} records, {len(bad)} failed")
    return EXIT_OK


def _count_actions(args, spec):
    policy = _load_count_policy(args.policy, spec)
    if not policy.is_pure():
        raise ConfigError("simulation needs a pure policy (use policy_pure.json)")
    if not np.array_equal(policy.assignment, spec.counter_of_state()):
        raise ConfigError("simulation needs a count-based policy")
    return policy.pure_actions()


def cmd_simulate(args):
    cfg, spec = _need_config(args)
    if not args.policy:
        raise ConfigError("simulate needs --policy")
    out = _out(args)
    res = simulate_policy(spec, _count_actions(args, spec), args.reps, args.seed, args.threads)
    io.write_table(out / "violations.csv", "violations",
                   [{"t": t + 1, "p_hat": p, "se": s}
                    for t, (p, s) in enumerate(zip(res.buffer_prob, res.buffer_se))])
    if spec.horizon:
        plots.violation_series(res.buffer_prob, res.buffer_se, spec.penalty.alpha,
                               out / "violations.png")
    _emit(out, "simulate.json", {"config_hash": config_hash(cfg), "mean": res.mean_reward,
                                 "ci_halfwidth": res.ci_halfwidth, "components": res.components,
                                 "max_violation": res.max_buffer_prob, "reps": res.reps})
    return EXIT_OK


def cmd_exhaustive(args):
    cfg, spec = _need_config(args)
    out = _out(args)
    rows = exhaustive_restricted(spec, parse_blocks(args.blocks), _floats(args.prices), args.reps,
                                 args.seed, args.top_k, args.top_reps, args.threads)
    io.write_table(out / "candidates.csv", "candidates", [
        {"rank": i + 1, "prices": " ".join(f"{p:g}" for p in c.prices), "mean": c.mean,
         "ci_halfwidth": c.ci_halfwidth, "max_violation": c.max_violation,
         "feasible": c.feasible, "reps": c.reps} for i, c in enumerate(rows)])
    best = rows[0]
    _emit(out, "exhaustive.json", {"config_hash": config_hash(cfg), "best_prices": best.prices,
                                   "best_mean": best.mean, "ci_halfwidth": best.ci_halfwidth,
                                   "feasible": best.feasible, "candidates": len(rows)})
    return EXIT_OK


def cmd_qlearn(args):
    cfg, spec = _need_config(args)
    out = _out(args)
    res = qlearn_aggregated(spec, _floats(args.rates), args.episodes, args.eval_every,
                            args.eval_reps, args.seed, args.threads)
    rows = [{"episode": e, "rate": r, "value_estimate": v, "ci_halfwidth": c}
            for e, r, v, c in res.curves]
    io.write_table(out / "curves.csv", "curves", rows)
    plots.learning_curves(rows, out / "curves.png")
    io.write_table(out / "policy_table.csv", "policy_table",
                   io.policy_rows(res.best_actions, spec.prices))
    _emit(out, "qlearn.json", {"config_hash": config_hash(cfg), "best_rate": res.best_rate,
                               "best_value": res.best_value})
    return EXIT_OK


def _save_actions(out, spec, actions, h, stem):
    theta = np.eye(spec.n_actions)[actions]
    policy = PartitionedPolicy(spec.counter_of_state(), theta)
    io.save_policy(out / f"{stem}.json", policy, spec.prices, h)
    io.write_table(out / f"{stem}_table.csv", "policy_table", io.policy_rows(actions, spec.prices))
    plots.policy_heatmap(actions, spec.prices, out / f"{stem}.png")


def cmd_bellman_full(args):
    cfg, spec = _need_config(args)
    out = _out(args)
    sol = bellman_optimal(build_fullinfo(spec))
    _emit(out, "bellman_full.json", {"config_hash": config_hash(cfg), "v_mdp_exact": sol.value})
    return EXIT_OK


def cmd_bellman_geom(args):
    cfg, spec = _need_config(args)
    out, h = _out(args), config_hash(cfg)
    sol = geometric_exact(spec)
    _save_actions(out, spec, sol.actions, h, "geometric_policy")
    _emit(out, "bellman_geom.json", {"config_hash": h, "v_geom_exact": sol.value,
                                     "completion_prob": float(spec.g[0])})
    return EXIT_OK


def cmd_extract(args):
    cfg, spec = _need_config(args)
    out, h = _out(args), config_hash(cfg)
    model = build_fullinfo(spec)
    sol = bellman_optimal(model)
    actions, value = extract_count_policy(model, sol)
    _save_actions(out, spec, actions, h, "extracted_policy")
    _emit(out, "extract.json", {"config_hash": h, "v_extract_exact": value,
                                "v_mdp_exact": sol.value})
    return EXIT_OK


# -- parser -----------------------------------------------------------------
def _common():
    # a fresh parent per subcommand: set_defaults would otherwise leak across them
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="instance YAML file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    return common


def build_parser():
    p = _Parser(prog="qdp", description="Nonlinear MDP pricing solver and experiment harness.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train", parents=[_common()], help="exponentiated Q-ascent")
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--eta-sweep", help="comma-separated learning rates")
    s.add_argument("--epsilon", type=float, default=1e-6)
    s.add_argument("--max-episodes", type=int, default=10_000)
    s.add_argument("--adaptive", action="store_true")
    s.add_argument("--sharing", help="count blocks sharing one pmf, e.g. 0-10,11-15")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[_common()], help="QPLEX value of a policy file")
    s.add_argument("--policy", required=False)
    s.add_argument("--marginals", action="store_true", help="also write marginals.csv")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", parents=[_common()], help="derivative and equivalence checks")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--corrupt", action="store_true", help="negative control: perturb a partial")
    s.set_defaults(func=cmd_gradcheck, out=None)

    s = sub.add_parser("design", parents=[_common()], help="run an experiment design")
    s.add_argument("design", help="design YAML file")
    s.add_argument("--parallel", type=int, default=1)
    s.set_defaults(func=cmd_design, seed=None)

    s = sub.add_parser("simulate", parents=[_common()], help="Monte Carlo value of a pure policy")
    s.add_argument("--policy")
    s.add_argument("--reps", type=int, default=100_000)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("exhaustive", parents=[_common()], help="restricted-class search")
    s.add_argument("--blocks", required=True)
    s.add_argument("--prices", required=True)
    s.add_argument("--reps", type=int, default=100_000)
    s.add_argument("--top-k", type=int, default=6)
    s.add_argument("--top-reps", type=int)
    s.set_defaults(func=cmd_exhaustive)

    s = sub.add_parser("qlearn", parents=[_common()], help="state-aggregated Q-learning")
    s.add_argument("--rates", default="0.1,0.05,0.025,0.01,0.005,0.0025")
    s.add_argument("--episodes", type=int, default=1_000_000)
    s.add_argument("--eval-every", type=int, default=100_000)
    s.add_argument("--eval-reps", type=int, default=100_000)
    s.set_defaults(func=cmd_qlearn)

    for name, fn, text in (("bellman-full", cmd_bellman_full, "full-information optimum"),
                           ("bellman-geom", cmd_bellman_geom, "geometric-service optimum"),
                           ("extract", cmd_extract, "extracted count policy")):
        s = sub.add_parser(name, parents=[_common()], help=text)
        s.set_defaults(func=fn)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResourceGuardError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelContractError, NumericalDomainError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
