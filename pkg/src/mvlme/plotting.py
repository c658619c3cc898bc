"""Report figures written next to the CSV outputs."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no software/date stamps, so reruns give identical bytes
_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def alpha_forest(reports: Sequence, path, scaled: bool = True):
    """Posterior mean and 95% interval of alpha per group."""
    fig, ax = plt.subplots(figsize=(6, 1 + 0.4 * max(len(reports), 1)))
    if reports:
        if scaled:
            mean = np.array([r.alpha_scaled_mean for r in reports])
            lo = np.array([r.alpha_scaled_q025 for r in reports])
            hi = np.array([r.alpha_scaled_q975 for r in reports])
        else:
            mean = np.array([r.alpha_mean for r in reports])
            lo = np.array([r.alpha_q025 for r in reports])
            hi = np.array([r.alpha_q975 for r in reports])
        y = np.arange(len(reports))[::-1]
        ax.errorbar(mean, y, xerr=[mean - lo, hi - mean], fmt="o", color="k", capsize=3)
        ax.set_yticks(y, [r.group for r in reports])
        ax.axvline(0.0, color="grey", lw=0.8, ls="--")
    label = "alpha"
    if scaled and reports:
        label += f" per {reports[0].scale:g} units of the source"
    ax.set_xlabel(label)
    fig.tight_layout()
    return _save(fig, path)


def alpha_trace_density(chains: Sequence, path):
    """Histogram of alpha draws, one colour per chain."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k, ch in enumerate(chains):
        ax.hist(ch["alpha"], bins=40, histtype="step", density=True, label=f"chain {k}")
    ax.set_xlabel("alpha")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def bias_boxplots(table, path, parameters: Sequence[str] = ()):
    """Boxplots of (estimate - truth) across replicates, one panel per parameter."""
    rows = [r for r in table.replicate_rows() if r.get("status") == "ok"]
    params = list(parameters) or sorted({r["parameter"] for r in rows})
    if not params:
        params = ["alpha"]
    groups = sorted({(r["scenario"], r["structure"]) for r in rows})
    ncol = min(3, len(params))
    nrow = int(np.ceil(len(params) / ncol))
    fig, axes = plt.subplots(nrow, ncol, figsize=(4 * ncol, 3 * nrow), squeeze=False)
    for ax, p in zip(axes.ravel(), params):
        data, labels = [], []
        for g in groups:
            vals = [r["mean"] - r["truth"] for r in rows
                    if (r["scenario"], r["structure"]) == g and r["parameter"] == p]
            if vals:
                data.append(vals)
                labels.append(f"{g[0]}\n{g[1]}")
        if data:
            ax.boxplot(data)
            ax.set_xticks(np.arange(1, len(data) + 1), labels, fontsize=7)
        ax.axhline(0.0, color="grey", lw=0.8, ls="--")
        ax.set_title(p, fontsize=9)
    for ax in axes.ravel()[len(params):]:
        ax.set_visible(False)
    fig.tight_layout()
    return _save(fig, path)
