"""Typed CSV tables and policy files.

Every table has a fixed column schema. Floats are written with ``repr`` so
that reading a file back gives exactly the values that were written.
"""
import csv
import json

import numpy as np

from qdp.errors import ConfigError
from qdp.policy.tabular import PartitionedPolicy

SCHEMAS = {
    "trace": [("episode", int), ("J", float), ("revenue", float), ("waiting", float),
              ("terminal", float), ("penalty", float), ("stopping_stat", float),
              ("eta_effective", float), ("accepted", bool)],
    "marginals": [("t", int), ("z", int), ("mass", float)],
    "violations": [("t", int), ("p_hat", float), ("se", float)],
    "curves": [("episode", int), ("rate", float), ("value_estimate", float),
               ("ci_halfwidth", float)],
    "candidates": [("rank", int), ("prices", str), ("mean", float), ("ci_halfwidth", float),
                   ("max_violation", float), ("feasible", bool), ("reps", int)],
    "records": [("cell", str), ("method", str), ("value", float), ("revenue", float),
                ("waiting", float), ("terminal", float), ("penalty", float),
                ("episodes", int), ("wall_time", float), ("seed", int),
                ("config_hash", str), ("status", str)],
    "summary": [("cell", str), ("config_hash", str), ("v_qdp_qplex", float),
                ("v_qdp_exact", float), ("v_mdp_exact", float), ("v_extract_exact", float),
                ("v_geom_exact", float), ("v_qdp_exact_geom", float),
                ("rel_err_qplex", float), ("gap_upper", float), ("extract_vs_qdp", float),
                ("gap_geom", float)],
    "values": [("method", str), ("value", float), ("ci_halfwidth", float)],
    "policy_table": [("t", int), ("z", int), ("price", float)],
}


def _fmt(value, kind):
    if value is None:
        return ""
    if kind is float:
        return repr(float(value))
    if kind is bool:
        return "true" if value else "false"
    return str(value)


def _parse(text, kind, column):
    if text == "":
        return None
    try:
        if kind is bool:
            if text not in ("true", "false"):
                raise ValueError(text)
            return text == "true"
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"bad value {text!r}", [column]) from exc


def write_table(path, schema, rows):
    """Write dict rows (missing keys -> empty cells) under a named schema."""
    cols = SCHEMAS[schema]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([c for c, _ in cols])
        for row in rows:
            extra = set(row) - {c for c, _ in cols}
            if extra:
                raise ConfigError(f"columns not in schema {schema!r}", sorted(extra))
            w.writerow([_fmt(row.get(c), k) for c, k in cols])


def read_table(path, schema):
    cols = SCHEMAS[schema]
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != [c for c, _ in cols]:
            raise ConfigError(f"header does not match schema {schema!r}", header or [])
        return [{c: _parse(v, k, c) for (c, k), v in zip(cols, line)} for line in r]


# -- policies ---------------------------------------------------------------
def policy_to_dict(policy, prices, config_hash=None):
    return {
        "kind": "partitioned_policy",
        "prices": list(map(float, prices)),
        "config_hash": config_hash,
        "assignment": policy.assignment.tolist(),
        "theta": policy.theta.tolist(),
        "sharing": None if policy.sharing is None
        else [[list(map(int, zs)), list(map(int, ts))] for zs, ts in policy.sharing],
    }


def save_policy(path, policy, prices, config_hash=None):
    with open(path, "w") as fh:
        json.dump(policy_to_dict(policy, prices, config_hash), fh)


def load_policy(path):
    """Returns (PartitionedPolicy, prices, config_hash)."""
    with open(path) as fh:
        data = json.load(fh)
    if data.get("kind") != "partitioned_policy":
        raise ConfigError(f"{path} is not a policy file")
    sharing = data["sharing"]
    if sharing is not None:
        sharing = tuple((tuple(zs), tuple(ts)) for zs, ts in sharing)
    policy = PartitionedPolicy(np.asarray(data["assignment"]), np.asarray(data["theta"]), sharing)
    return policy, tuple(data["prices"]), data.get("config_hash")


def policy_rows(actions, prices):
    """Long-form rows of a pure count policy for the ``policy_table`` schema."""
    T, Z = actions.shape
    return [{"t": t, "z": z, "price": prices[actions[t, z]]} for t in range(T) for z in range(Z)]
