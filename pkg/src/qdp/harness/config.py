"""YAML instance configs, resolution to a PricingSpec, and config hashes."""
import hashlib
import json

import numpy as np
import yaml

from qdp.errors import ConfigError
from qdp.pricing.spec import DEFAULT_PRICES, Penalty, make_spec, service_pmf

SCHEMA_VERSION = 1
REQUIRED = ("n", "b", "T", "service_pmf", "shape")
OPTIONAL = {"schema_version": SCHEMA_VERSION, "prices": list(DEFAULT_PRICES), "u_avg_max": 5.0,
            "c_W": 0.0, "c_T": 0.0, "penalty": None}
PENALTY_KEYS = {"C": 0.0, "k": 1.0, "alpha": 0.05, "zhat": None, "start": 1}


def _check_keys(raw, allowed, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {where}", unknown)


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def resolve_config(raw):
    """Validate a raw mapping and fill defaults; returns a plain dict."""
    _check_keys(raw, set(REQUIRED) | set(OPTIONAL), "config")
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError("missing required keys", missing)
    cfg = {**OPTIONAL, **raw}
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg['schema_version']!r}",
                          ["schema_version"])
    pen = cfg["penalty"] or {}
    _check_keys(pen, PENALTY_KEYS, "penalty")
    cfg["penalty"] = {**PENALTY_KEYS, **pen}
    for key in ("n", "b", "T"):
        v = cfg[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError("expected an integer", [key])
    bad = [k for k in ("u_avg_max", "c_W", "c_T")
           if isinstance(cfg[k], bool) or not isinstance(cfg[k], (int, float))]
    if bad:
        raise ConfigError("expected a number", bad)
    cfg["prices"] = [float(p) for p in cfg["prices"]]
    for k in ("u_avg_max", "c_W", "c_T"):
        cfg[k] = float(cfg[k])
    return _plain(cfg)


def spec_from_config(cfg):
    cfg = resolve_config(cfg)
    p = cfg["penalty"]
    penalty = Penalty(C=float(p["C"]), k=float(p["k"]), alpha=float(p["alpha"]),
                      zhat=p["zhat"], start=int(p["start"]))
    return make_spec(cfg["n"], cfg["b"], cfg["T"], cfg["service_pmf"], cfg["shape"],
                     u_avg_max=cfg["u_avg_max"], c_W=cfg["c_W"], c_T=cfg["c_T"],
                     penalty=penalty, prices=tuple(cfg["prices"]))


def load_config(path):
    """Read a YAML config file; returns (resolved dict, PricingSpec)."""
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = resolve_config(raw or {})
    return cfg, spec_from_config(cfg)


def config_hash(cfg):
    """Short sha256 of the canonical JSON form of a resolved config."""
    text = json.dumps(resolve_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(resolve_config(cfg), fh, sort_keys=True)


def service_summary(cfg):
    g = service_pmf(cfg["service_pmf"])
    return {"l_max": int(g.size), "mean_service": float(np.arange(1, g.size + 1) @ g)}
