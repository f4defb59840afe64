"""Static SVG charts of experiment outputs (optional, needs matplotlib)."""
from __future__ import annotations

from pathlib import Path


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_estimation(rows, path, experiment):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for mu in sorted({r["mu"] for r in rows}, reverse=True):
        pts = sorted((r["M"], r["mean_err_db"]) for r in rows if r["mu"] == mu and r["n_ok"])
        if not pts:
            continue
        label = "benchmark" if mu == 0 else f"mu = {mu:g}"
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-" if mu else "k--", label=label)
    ax.set_xscale("log")
    ax.set_xlabel("M")
    ax.set_ylabel("covariance error (dB)" if experiment == "covariance_error" else "Laplacian error (dB)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), format="svg")
    plt.close(fig)
    return Path(path)


def plot_msd(series, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    keys = []
    for r in series:
        k = (r["algorithm"], r["mu"], r["M"])
        if k not in keys:
            keys.append(k)
    for k in keys:
        pts = [(r["iteration"], r["msd_db"]) for r in series if (r["algorithm"], r["mu"], r["M"]) == k]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=k[0] if len(keys) <= 8 else f"{k[0]} mu={k[1]:g}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("MSD (dB)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), format="svg")
    plt.close(fig)
    return Path(path)
