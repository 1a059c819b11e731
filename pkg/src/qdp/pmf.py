"""Probability-vector helpers.

Pmfs are plain numpy arrays; these functions validate and repair them.
"""
import numpy as np

from qdp.errors import ModelContractError

#: entries in [-CLAMP_TOL, 0) are treated as round-off and clamped to zero
CLAMP_TOL = 1e-15
#: total-mass drift that is silently renormalized
RENORM_TOL = 1e-9


def as_pmf(weights, axis=-1, what="pmf"):
    """Return a validated copy of ``weights`` normalized along ``axis``.

    Small negative round-off is clamped to zero and small drift of the total
    mass is renormalized away. Anything larger raises ``ModelContractError``.
    """
    w = np.array(weights, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ModelContractError(f"{what}: non-finite entries")
    if w.size and w.min() < -CLAMP_TOL:
        raise ModelContractError(f"{what}: negative entry {w.min():.3e}")
    w[w < 0] = 0.0
    total = w.sum(axis=axis, keepdims=True)
    if np.any(np.abs(total - 1.0) > RENORM_TOL):
        bad = float(np.max(np.abs(total - 1.0)))
        raise ModelContractError(f"{what}: mass differs from 1 by {bad:.3e}")
    return w / total


def is_pmf(weights, tol=1e-12, axis=-1):
    w = np.asarray(weights)
    return bool(np.all(w >= 0) and np.all(np.abs(w.sum(axis=axis) - 1.0) <= tol))


def point_mass(n, i):
    out = np.zeros(n)
    out[i] = 1.0
    return out


def uniform(n):
    return np.full(n, 1.0 / n)
