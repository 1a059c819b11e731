"""Experiment designs: a grid of instance configs and a method list per cell."""
import itertools
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from qdp.baselines.fullinfo import (bellman_evaluate, bellman_optimal, build_fullinfo,
                                    extract_count_policy)
from qdp.baselines.geometric import geometric_evaluate, geometric_exact
from qdp.errors import ConfigError
from qdp.harness import io, plots
from qdp.harness.config import config_hash, resolve_config, spec_from_config
from qdp.harness.runs import components_of, train_qdp
from qdp.sim.des import simulate_policy

METHODS = ("qdp", "qdp-exact", "bellman-full", "extract", "bellman-geom", "simulate")
DEFAULT_OPTIONS = {"eta": 1.0, "epsilon": 1e-6, "max_episodes": 10_000, "sim_reps": 100_000,
                   "seed": 0}


def _set(cfg, key, value):
    if "." in key:
        head, sub = key.split(".", 1)
        cfg[head] = dict(cfg.get(head) or {})
        cfg[head][sub] = value
    else:
        cfg[key] = value


@dataclass
class ExperimentDesign:
    base: dict
    factors: dict = field(default_factory=dict)
    cells_override: list = None
    methods: tuple = ("qdp",)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError("unknown methods", bad)
        self.options = {**DEFAULT_OPTIONS, **self.options}

    @property
    def size(self):
        if self.cells_override is not None:
            return len(self.cells_override)
        n = 1
        for levels in self.factors.values():
            n *= len(levels)
        return n

    def cells(self):
        """Resolved configs in deterministic order."""
        if self.cells_override is not None:
            combos = self.cells_override
        else:
            keys = list(self.factors)
            combos = [dict(zip(keys, vals))
                      for vals in itertools.product(*(self.factors[k] for k in keys))]
        out = []
        for over in combos:
            cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in self.base.items()}
            for k, v in over.items():
                _set(cfg, k, v)
            out.append(resolve_config(cfg))
        return out

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        allowed = {"schema_version", "base", "factors", "cells", "methods", "options"}
        unknown = sorted(set(raw) - allowed)
        if unknown:
            raise ConfigError("unknown keys in design", unknown)
        if raw.get("schema_version", 1) != 1:
            raise ConfigError("unsupported design schema_version", ["schema_version"])
        return cls(raw.get("base", {}), raw.get("factors", {}), raw.get("cells"),
                   tuple(raw.get("methods", ["qdp"])), raw.get("options", {}))


def _rel(a, b):
    if a is None or b is None or b == 0:
        return None
    return (a - b) / abs(b)


def run_cell(cell_id, cfg, methods, options):
    """Run the requested methods on one cell; returns (records, summary row)."""
    h = config_hash(cfg)
    seed = int(options["seed"])
    records = []
    summary = {"cell": cell_id, "config_hash": h}

    def record(method, value=None, comps=None, episodes=None, wall=0.0, status="ok"):
        row = {"cell": cell_id, "method": method, "value": value, "episodes": episodes,
               "wall_time": wall, "seed": seed, "config_hash": h, "status": status}
        row.update(comps or {})
        records.append(row)

    def attempt(method, fn):
        t0 = time.perf_counter()
        try:
            return fn(t0)
        except Exception as exc:  # a failing method must not stop the grid
            record(method, wall=time.perf_counter() - t0,
                   status=f"error: {type(exc).__name__}: {exc}".replace("\n", " "))
            return None

    spec = spec_from_config(cfg)
    out = None
    if "qdp" in methods or any(m in methods for m in ("qdp-exact", "simulate")):
        def do_qdp(t0):
            o = train_qdp(spec, options["eta"], options["epsilon"], options["max_episodes"])
            record("qdp", o.pure_value.total, components_of(o.pure_value),
                   o.trace.episodes, o.wall_time)
            summary["v_qdp_qplex"] = o.pure_value.total
            return o
        out = attempt("qdp", do_qdp)

    full = sol = None
    if any(m in methods for m in ("bellman-full", "extract", "qdp-exact")):
        def do_full(t0):
            fm = build_fullinfo(spec)
            s = bellman_optimal(fm)
            if "bellman-full" in methods:
                record("bellman-full", s.value, wall=time.perf_counter() - t0)
            summary["v_mdp_exact"] = s.value
            return fm, s
        res = attempt("bellman-full", do_full)
        if res is not None:
            full, sol = res

    if full is not None and out is not None and ("qdp-exact" in methods or "bellman-full" in methods):
        def do_exact(t0):
            v = bellman_evaluate(full, out.actions)
            record("qdp-exact", v, wall=time.perf_counter() - t0)
            summary["v_qdp_exact"] = v
        attempt("qdp-exact", do_exact)

    if full is not None and "extract" in methods:
        def do_extract(t0):
            _, v = extract_count_policy(full, sol)
            record("extract", v, wall=time.perf_counter() - t0)
            summary["v_extract_exact"] = v
        attempt("extract", do_extract)

    if "bellman-geom" in methods:
        def do_geom(t0):
            g = geometric_exact(spec)
            record("bellman-geom", g.value, wall=time.perf_counter() - t0)
            summary["v_geom_exact"] = g.value
            if out is not None:
                v = geometric_evaluate(spec, out.actions)
                summary["v_qdp_exact_geom"] = v
                summary["gap_geom"] = -_rel(v, g.value)
        attempt("bellman-geom", do_geom)

    if "simulate" in methods and out is not None:
        def do_sim(t0):
            r = simulate_policy(spec, out.actions, int(options["sim_reps"]), seed)
            record("simulate", r.mean_reward,
                   {k: v for k, v in r.components.items()}, wall=time.perf_counter() - t0)
        attempt("simulate", do_sim)

    ex = summary.get("v_qdp_exact")
    qp, mdp = summary.get("v_qdp_qplex"), summary.get("v_mdp_exact")
    # (exact - qplex) / |exact| and (mdp - qdp) / |mdp|
    summary["rel_err_qplex"] = None if ex is None or qp is None else -_rel(qp, ex)
    summary["gap_upper"] = None if ex is None or mdp is None else -_rel(ex, mdp)
    summary["extract_vs_qdp"] = _rel(summary.get("v_extract_exact"), ex)
    return records, summary


def run_design(design, out_dir, parallelism=1):
    """Execute every cell; per-cell results are merged in cell order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = design.cells()
    ids = [f"c{i:04d}" for i in range(len(cells))]

    def work(args):
        cid, cfg = args
        try:
            return run_cell(cid, cfg, design.methods, design.options)
        except Exception as exc:
            rec = {"cell": cid, "method": "cell", "seed": int(design.options["seed"]),
                   "status": f"error: {type(exc).__name__}: {exc}",
                   "config_hash": config_hash(cfg)}
            traceback.print_exc()
            return [rec], {"cell": cid, "config_hash": config_hash(cfg)}

    jobs = list(zip(ids, cells))
    if parallelism > 1:
        with ThreadPoolExecutor(parallelism) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    records = [r for recs, _ in results for r in recs]
    summary = [s for _, s in results]
    io.write_table(out_dir / "records.csv", "records", records)
    io.write_table(out_dir / "summary.csv", "summary", summary)
    with open(out_dir / "cells.yaml", "w") as fh:
        yaml.safe_dump({cid: cfg for cid, cfg in jobs}, fh, sort_keys=True)
    for col, label in (("rel_err_qplex", "relative error QPLEX vs exact"),
                       ("gap_upper", "optimality gap upper bound"),
                       ("extract_vs_qdp", "extracted vs QDP (relative)"),
                       ("gap_geom", "gap to geometric optimum")):
        vals = [s.get(col) for s in summary]
        if any(v is not None for v in vals):
            plots.histogram(vals, out_dir / f"hist_{col}.png", label)
    return records, summary
