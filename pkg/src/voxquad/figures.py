"""Log-log study figures rendered next to the delimited output."""

from __future__ import annotations

import os

import numpy as np

__all__ = ["figure_path_for", "render_study_figure"]


def figure_path_for(csv_path: str) -> str:
    root, _ = os.path.splitext(csv_path)
    return root + ".png"


def render_study_figure(report, png_path: str, title: str = "") -> str:
    """Plot each error column against h on log-log axes with a fitted-rate legend."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    hs = report.rows[:, 0]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    markers = "os^dv"
    for j, col in enumerate(report.columns[1:], start=1):
        vals = report.rows[:, j]
        rate = report.rates_all.get(col)
        label = col if rate is None or not np.isfinite(rate) else f"{col} (rate {rate:.2f})"
        ax.loglog(hs, vals, marker=markers[(j - 1) % len(markers)], label=label)
    if len(hs) > 1 and np.all(report.rows[:, 1:] > 0):
        anchor = report.rows[-1, 1:].max()
        for order, style in ((1, ":"), (2, "--")):
            guide = anchor * (hs / hs[-1]) ** order
            ax.loglog(hs, guide, style, color="gray", linewidth=0.8, label=f"h^{order}")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return png_path
