"""Static figures written next to the CSV outputs."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def training_curve(rows, path):
    ep = [r["episode"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(ep, [r["J"] for r in rows], lw=1.5)
    ax.set_xlabel("episode")
    ax.set_ylabel("QPLEX value J")
    return _save(fig, path)


def policy_heatmap(actions, prices, path, title=None):
    table = np.asarray(prices)[np.asarray(actions)].T
    fig, ax = plt.subplots(figsize=(7, 3.6))
    im = ax.imshow(table, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xlabel("t")
    ax.set_ylabel("z")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="price")
    return _save(fig, path)


def violation_series(p_hat, se, alpha, path):
    t = np.arange(1, len(p_hat) + 1)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.errorbar(t, p_hat, yerr=3 * np.asarray(se), fmt=".-", lw=1, ms=3)
    ax.axhline(alpha, color="k", ls="--", lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("P[z > zhat]")
    return _save(fig, path)


def learning_curves(rows, path, reference=None):
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    for rate in sorted({r["rate"] for r in rows}, reverse=True):
        pts = [(r["episode"], r["value_estimate"]) for r in rows if r["rate"] == rate]
        x, y = zip(*pts)
        ax.plot(x, y, marker=".", lw=1, label=f"rate {rate:g}")
    if reference is not None:
        ax.axhline(reference, color="k", ls="--", lw=1, label="QDP")
    ax.set_xlabel("episodes")
    ax.set_ylabel("simulated value")
    ax.legend(fontsize=7)
    return _save(fig, path)


def histogram(values, path, xlabel):
    vals = np.asarray([v for v in values if v is not None and np.isfinite(v)])
    fig, ax = plt.subplots(figsize=(4.5, 3))
    if vals.size:
        ax.hist(vals, bins=min(20, max(5, vals.size // 2)))
    ax.set_xlabel(xlabel)
    ax.set_ylabel("cells")
    return _save(fig, path)
