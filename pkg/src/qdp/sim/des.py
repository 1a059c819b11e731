"""Monte Carlo simulation of the physical multiserver pricing system.

Replications are simulated in lockstep, vectorized over a block. Each
in-service customer is stored by its completion time in a circular
buffer of length l_max, so a period costs O(reps) regardless of n.

Within-period order (time t -> t+1):

1. observe z_t and post the price of the policy; waiting cost accrues on z_t
2. customers whose completion time is t+1 depart (d of them)
3. Poisson arrivals are admitted up to n + b + d - z_t
4. free servers are filled from buffer and arrivals; each entrant draws
   an independent duration from g and completes at t+1+duration

Random streams: block ``k`` of ``BLOCK`` consecutive replications uses a
Philox generator keyed by ``(seed, k)``, so any scheduling of blocks over
workers gives bit-identical results.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

BLOCK = 8192


def block_rng(seed, block, stream=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, block))))


@dataclass(frozen=True, eq=False)
class SimResult:
    """Replication averages; CI halfwidths are three standard errors."""

    mean_reward: float
    std_error: float
    components: dict
    buffer_prob: np.ndarray
    buffer_se: np.ndarray
    reps: int

    @property
    def ci_halfwidth(self):
        return 3.0 * self.std_error

    @property
    def max_buffer_prob(self):
        return float(self.buffer_prob.max()) if self.buffer_prob.size else 0.0


def run_block(spec, choose, reps, rng, record=False):
    """Simulate ``reps`` replications from the empty system.

    ``choose(t, z, rng)`` returns an action index per replication. Returns
    per-replication component totals, per-period violation indicators
    summed over the block, and (with ``record``) the visited counters,
    actions and one-period rewards.
    """
    T, L, n, N = spec.horizon, spec.n_labels, spec.n, spec.capacity
    prices = np.asarray(spec.prices)
    cum = np.cumsum(spec.g)
    cum[-1] = 1.0
    ring = np.zeros(reps * L, dtype=np.int64)
    z = np.zeros(reps, dtype=np.int64)
    rows = np.arange(reps) * L
    revenue = np.zeros(reps)
    waiting = np.zeros(reps)
    over = np.zeros(T, dtype=np.int64)
    zhat = spec.penalty.zhat
    if record:
        zs = np.zeros((reps, T + 1), dtype=np.int16)
        acts = np.zeros((reps, T), dtype=np.int8)
        rews = np.zeros((reps, T))
    for t in range(T):
        a = choose(t, z, rng)
        if record:
            zs[:, t] = z
            acts[:, t] = a
        w = -spec.c_W * np.maximum(z - n, 0)
        y = rng.poisson(spec.lam[t][a])
        slot = rows + (t + 1) % L
        d = ring[slot]
        ring[slot] = 0
        admitted = np.minimum(y, N + d - z)
        r = prices[a] * admitted
        busy = np.minimum(z, n) - d
        z = z - d + admitted
        e = np.minimum(z, n) - busy
        total = int(e.sum())
        if total:
            dur = np.searchsorted(cum, rng.random(total), side="right") + 1
            dur = np.minimum(dur, L)
            owner = np.repeat(rows, e)
            ring += np.bincount(owner + (t + 1 + dur) % L, minlength=reps * L)
        revenue += r
        waiting += w
        over[t] = np.count_nonzero(z > zhat)
        if record:
            rews[:, t] = r + w
    terminal = -spec.c_T * z
    out = {"revenue": revenue, "waiting": waiting, "terminal": terminal}
    if record:
        zs[:, T] = z
        return out, over, (zs, acts, rews)
    return out, over


def _blocks(reps):
    starts = range(0, reps, BLOCK)
    return [(k, min(BLOCK, reps - s)) for k, s in enumerate(starts)]


def simulate_choice(spec, choose, reps, seed, threads=1, stream=0):
    """Aggregate ``run_block`` over replication blocks in index order."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    jobs = _blocks(reps)

    def work(job):
        k, size = job
        return run_block(spec, choose, size, block_rng(seed, k, stream))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    comps = {k: np.concatenate([p[0][k] for p in parts]) for k in parts[0][0]}
    total = comps["revenue"] + comps["waiting"] + comps["terminal"]
    over = np.sum([p[1] for p in parts], axis=0)
    p_hat = over / reps
    mean = float(np.sum(total) / reps)
    sd = float(np.std(total, ddof=1)) if reps > 1 else 0.0
    return SimResult(
        mean_reward=mean,
        std_error=sd / np.sqrt(reps),
        components={k: float(np.sum(v) / reps) for k, v in comps.items()},
        buffer_prob=p_hat,
        buffer_se=np.sqrt(p_hat * (1 - p_hat) / reps),
        reps=reps,
    )


def table_chooser(actions):
    """Chooser for a pure count policy given as a (T, Z) action table."""
    actions = np.asarray(actions)

    def choose(t, z, rng):
        return actions[t][z]

    return choose


def simulate_policy(spec, actions, reps, seed, threads=1):
    """Simulate a pure count policy (T, Z) of action indices."""
    return simulate_choice(spec, table_chooser(actions), reps, seed, threads)


def estimate_violations(spec, actions, reps, seed, threads=1):
    """Per-period estimates of P[z_t > zhat], t = 1..T, with binomial standard errors."""
    res = simulate_policy(spec, actions, reps, seed, threads)
    return res.buffer_prob, res.buffer_se
