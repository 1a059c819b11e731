"""Pricing instance description: service pmfs, arrival shapes, costs."""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from qdp.errors import ConfigError
from qdp.pmf import as_pmf

DEFAULT_PRICES = tuple(round(0.1 * k, 1) for k in range(1, 12))
REJECT_PRICE = 1.1
GEOMETRIC_TAIL = 1e-6


def _uniform_on(support, lmax=20):
    g = np.zeros(lmax)
    g[np.asarray(support) - 1] = 1.0
    return g / g.sum()


SERVICE_PMFS = {
    "Uni": lambda: _uniform_on(range(1, 21)),
    "UniM": lambda: _uniform_on(range(11, 21)),
    "UniH": lambda: _uniform_on(range(16, 21)),
    "BB": lambda: _uniform_on(list(range(1, 6)) + list(range(16, 21))),
}


def _geometric_truncated(p, lmax):
    ell = np.arange(1, lmax + 1)
    w = p * (1 - p) ** (ell - 1)
    return w / w.sum()


def _tail_length(p, tail):
    return max(1, int(np.ceil(np.log(tail) / np.log1p(-p) - 1e-12)))


def truncated_geometric(mean, tail=GEOMETRIC_TAIL):
    """Geometric pmf on {1..l_max}, right tail of mass ``tail`` cut off and
    the success parameter re-fit so that the truncated pmf has the given mean."""
    if mean <= 1:
        raise ConfigError("geometric mean must exceed 1")
    p = 1.0 / mean
    lmax = _tail_length(p, tail)
    for _ in range(50):
        ell = np.arange(1, lmax + 1)
        p = brentq(lambda q: _geometric_truncated(q, lmax) @ ell - mean, 1e-9, 1 - 1e-12,
                   xtol=1e-15, rtol=1e-15)
        new = _tail_length(p, tail)
        if new == lmax:
            break
        lmax = new
    return _geometric_truncated(p, lmax)


def service_pmf(value):
    """Resolve a service pmf from a name, ``geometric:<mean>`` or an explicit vector."""
    if isinstance(value, str):
        if value in SERVICE_PMFS:
            return SERVICE_PMFS[value]()
        if value.startswith("geometric:"):
            return truncated_geometric(float(value.split(":", 1)[1]))
        raise ConfigError("unknown service pmf", [value])
    if isinstance(value, dict) and set(value) == {"geometric_mean"}:
        return truncated_geometric(float(value["geometric_mean"]))
    g = np.asarray(value, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ConfigError("service pmf must be a name or a non-empty vector")
    return as_pmf(g, what="service pmf")


# Piecewise-constant plateau levels over five equal parts of the horizon.
SHAPE_LEVELS = {
    "DEC": (5.0, 4.0, 3.0, 2.0, 1.0),
    "INC": (1.0, 2.0, 3.0, 4.0, 5.0),
    "ALT": (1.0, 0.4, 1.0, 0.4, 1.0),
    "CON": (1.0, 1.0, 1.0, 1.0, 1.0),
}


def arrival_shape(shape, horizon):
    """Shape vector s^(t), t < T, normalized to time-average 1."""
    if isinstance(shape, str):
        if shape not in SHAPE_LEVELS:
            raise ConfigError("unknown arrival shape", [shape])
        levels = np.asarray(SHAPE_LEVELS[shape])
        s = levels[(np.arange(horizon) * len(levels)) // max(horizon, 1)]
    else:
        s = np.asarray(shape, dtype=float)
        if s.shape != (horizon,):
            raise ConfigError(f"shape vector must have length T={horizon}")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ConfigError("shape values must be finite and non-negative")
    if horizon and s.sum() <= 0:
        raise ConfigError("shape vector must have positive mass")
    return s / s.mean() if horizon else s


def build_arrival_table(shape, u_avg_max, n, mean_service, prices, horizon=None):
    """lambda^(t)(a) = (n u / E[S]) s^(t) (1.1 - a), shape (T, A)."""
    if isinstance(shape, str):
        if horizon is None:
            raise ConfigError("named shapes need the horizon")
        s = arrival_shape(shape, horizon)
    else:
        s = arrival_shape(shape, len(shape))
    prices = np.asarray(prices, dtype=float)
    if not np.any(np.isclose(prices, REJECT_PRICE)):
        raise ConfigError("price grid must contain the reject price 1.1")
    slope = np.clip(REJECT_PRICE - prices, 0.0, None)
    slope[np.isclose(prices, REJECT_PRICE)] = 0.0
    return (n * u_avg_max / mean_service) * np.outer(s, slope)


@dataclass(frozen=True)
class Penalty:
    """-C * max(P[z > zhat] - alpha, 0)^k, charged at epochs start..T."""

    C: float = 0.0
    k: float = 1.0
    alpha: float = 0.05
    zhat: int = None
    start: int = 1


@dataclass(frozen=True, eq=False)
class PricingSpec:
    """Single-station pricing instance.

    ``g[l-1]`` is the probability of a service duration of l periods and
    ``lam[t, a]`` the Poisson arrival rate at price ``prices[a]``. ``sizes``
    overrides the number in service x(z) (default min(z, n)).
    """

    n: int
    b: int
    horizon: int
    prices: tuple
    g: np.ndarray
    lam: np.ndarray
    c_W: float = 0.0
    c_T: float = 0.0
    penalty: Penalty = field(default_factory=Penalty)
    sizes: tuple = None

    def __post_init__(self):
        g = as_pmf(self.g, what="service pmf")
        lam = np.array(self.lam, dtype=float)
        if self.n < 1 or self.b < 0 or self.horizon < 0:
            raise ConfigError("need n >= 1, b >= 0, T >= 0")
        if lam.shape != (self.horizon, len(self.prices)):
            raise ConfigError(f"arrival table must have shape (T, A) = "
                              f"({self.horizon}, {len(self.prices)}), got {lam.shape}")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ConfigError("arrival rates must be finite and non-negative")
        pen = self.penalty
        zhat = self.n if pen.zhat is None else int(pen.zhat)
        if not 0 <= zhat <= self.n + self.b:
            raise ConfigError("penalty threshold zhat must lie in 0..n+b")
        if pen.C < 0 or pen.k < 1 or not 0 < pen.alpha < 1:
            raise ConfigError("penalty needs C >= 0, k >= 1, 0 < alpha < 1")
        object.__setattr__(self, "penalty", Penalty(pen.C, pen.k, pen.alpha, zhat, pen.start))
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        g.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "lam", lam)
        if self.sizes is not None:
            object.__setattr__(self, "sizes", tuple(int(v) for v in self.sizes))

    # -- derived sizes ------------------------------------------------------
    @property
    def capacity(self):
        return self.n + self.b

    @property
    def n_counters(self):
        return self.n + self.b + 1

    @property
    def n_labels(self):
        return self.g.shape[0]

    @property
    def n_states(self):
        return self.n_counters * self.n_labels

    @property
    def n_actions(self):
        return len(self.prices)

    @property
    def mean_service(self):
        return float(np.arange(1, self.n_labels + 1) @ self.g)

    @property
    def x(self):
        """Number in service for each counter value."""
        if self.sizes is not None:
            return np.asarray(self.sizes)
        return np.minimum(np.arange(self.n_counters), self.n)

    def state_index(self, z, label):
        return z * self.n_labels + (label - 1)

    def counter_of_state(self):
        return np.repeat(np.arange(self.n_counters), self.n_labels)

    def reject_action(self):
        return int(np.argmin(np.abs(np.asarray(self.prices) - REJECT_PRICE)))

    def penalized(self, t):
        return self.penalty.C > 0 and t >= self.penalty.start

    def replace(self, **kw):
        fields = dict(n=self.n, b=self.b, horizon=self.horizon, prices=self.prices, g=self.g,
                      lam=self.lam, c_W=self.c_W, c_T=self.c_T, penalty=self.penalty,
                      sizes=self.sizes)
        fields.update(kw)
        return PricingSpec(**fields)

    def restrict_prices(self, indices):
        """Same instance with the action set reduced to ``prices[indices]``."""
        idx = list(indices)
        return self.replace(prices=tuple(self.prices[i] for i in idx), lam=self.lam[:, idx])


def make_spec(n, b, horizon, service, shape, u_avg_max=5.0, c_W=0.0, c_T=0.0,
              penalty=None, prices=DEFAULT_PRICES):
    """Build a spec from design-level parameters (named pmf and shape allowed)."""
    g = service_pmf(service)
    mean = float(np.arange(1, g.size + 1) @ g)
    lam = build_arrival_table(shape, u_avg_max, n, mean, prices, horizon)
    return PricingSpec(n, b, horizon, tuple(prices), g, lam, c_W, c_T, penalty or Penalty())
