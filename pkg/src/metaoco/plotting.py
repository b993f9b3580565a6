"""Report figures rendered next to the delimited output.

One figure per report: per-task mean curves with shaded confidence bands,
one panel per task-dispersion value r (regression / classification) or a
single panel of cumulative criterion curves (aggregation modes).
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import EWA_MODES, RunRecord, aggregate, regret_curve

__all__ = ["render_report_figure"]

_STYLE = {
    "I-OGA": dict(color="tab:gray", ls="--"),
    "mean-OPMS": dict(color="tab:orange", ls="-"),
    "OPMS": dict(color="tab:blue", ls="-"),
    "I-EWA": dict(color="tab:gray", ls="--"),
    "OGMS-eta": dict(color="tab:green", ls="-"),
    "OPMS-eta": dict(color="tab:blue", ls="-"),
    "OPMS-prior": dict(color="tab:blue", ls="-"),
}


def _panel(ax, rows, ylabel, transform=None, logy=False):
    for row in rows:
        y = row.mean
        hw = row.half_width
        if transform is not None:
            y, hw = transform(y, hw)
        x = np.arange(1, y.shape[0] + 1)
        style = _STYLE.get(row.method, {})
        ax.plot(x, y, label=row.method, lw=1.4, **style)
        ax.fill_between(x, y - hw, y + hw, alpha=0.2,
                        color=style.get("color"))
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("task t")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)


def render_report_figure(records: list[RunRecord], mode: str, csv_path, n: int) -> Path:
    """Write ``<csv stem>.png`` beside the CSV and return its path."""
    out = Path(csv_path).with_suffix(".png")

    if mode in EWA_MODES:
        rows = aggregate(records, field="per_task_metaloss")
        fig, ax = plt.subplots(figsize=(5.0, 3.6))

        def cum(y, hw):
            return np.cumsum(y), np.cumsum(hw) / np.sqrt(np.arange(1, y.shape[0] + 1))

        _panel(ax, rows, "cumulative meta-criterion", transform=cum)
    else:
        rows = aggregate(records, field="per_task_mse")
        rvals = sorted({row.r for row in rows})
        k = len(rvals)
        ncols = min(k, 2)
        nrows = math.ceil(k / ncols)
        fig, axes = plt.subplots(nrows, ncols, squeeze=False,
                                 figsize=(5.0 * ncols, 3.6 * nrows))
        for i, r in enumerate(rvals):
            ax = axes[i // ncols][i % ncols]
            sub = [row for row in rows if row.r == r]
            if mode == "classification":
                def reg(y, hw, n=n):
                    t = np.arange(1, y.shape[0] + 1)
                    return regret_curve(y * n, n), np.cumsum(hw) / t

                _panel(ax, sub, "R(t)", transform=reg)
            else:
                _panel(ax, sub, "end-of-task MSE", logy=True)
            ax.set_title(f"r = {r:g}")
        for j in range(k, nrows * ncols):
            axes[j // ncols][j % ncols].axis("off")

    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
