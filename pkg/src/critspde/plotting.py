"""PNG rendering of plot data (opt-in; the CSV files are the primary output)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .report import Plot  # noqa: E402

# fixed metadata so repeated renders give identical bytes
_METADATA = {"Software": None}


def render(plot: Plot, path: str | Path, title: str = "") -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.0, 3.6), dpi=100)
    for label, (x, y) in plot.series.items():
        ax.plot(x, y, marker="o", ms=3, label=label)
    if plot.logx:
        ax.set_xscale("log")
    if plot.logy and all(v > 0 for _, ys in plot.series.values() for v in ys):
        ax.set_yscale("log")
    ax.set_xlabel(plot.xlabel)
    ax.set_ylabel(plot.ylabel)
    if title:
        ax.set_title(title, fontsize=9)
    if len(plot.series) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_METADATA)
    plt.close(fig)
    return path
