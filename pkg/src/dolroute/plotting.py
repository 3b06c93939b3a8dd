"""Matplotlib renderings of the CSV artifacts (Agg backend, PNG output)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps reruns byte-identical
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def plot_loss_curve(loss, label, path):
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(np.arange(1, len(loss) + 1), loss, marker="o", ms=3, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel(label.replace("_", " "))
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_method_table(rows, path):
    """``rows``: ``(method, mean, std)`` triples."""
    names = [r[0] for r in rows]
    means = np.array([r[1] for r in rows])
    stds = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(4.0, 3.2))
    ax.bar(names, means, yerr=stds, capsize=4, color=["C0", "C1", "C7"][:len(rows)])
    ax.set_ylabel("UAVs recharged")
    ax.grid(axis="y", alpha=0.3)
    _save(fig, path)


def plot_beta_sweep(rows, beta_star, path):
    """``rows``: ``(beta, f12, f13, selection)`` from the beta sweep."""
    b = np.array([r[0] for r in rows])
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(b, [r[1] for r in rows], label="{s1, s2}")
    ax.plot(b, [r[2] for r in rows], label="{s1, s3}")
    ax.axvline(beta_star, color="k", ls="--", lw=0.8)
    ax.set_xlabel("beta")
    ax.set_ylabel("objective value")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_boundaries(rows, boundaries, path):
    """``rows``: ``(z, w_hat1, w_hat2, decision, method)``; ``boundaries``: method -> z."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for k, name in enumerate(("optimal", "mse", "dol")):
        sub = [r for r in rows if r[4] == name]
        z = np.array([r[0] for r in sub])
        ls = "-" if name == "optimal" else "--"
        ax.plot(z, [r[1] for r in sub], color=f"C{k}", ls=ls, label=f"{name} route 1")
        ax.plot(z, [r[2] for r in sub], color=f"C{k}", ls=ls, alpha=0.5)
        if name in boundaries and np.isfinite(boundaries[name]):
            ax.axvline(boundaries[name], color=f"C{k}", lw=0.8)
    ax.set_xlabel("z")
    ax.set_ylabel("route weight")
    ax.legend(frameon=False, fontsize=7)
    _save(fig, path)
