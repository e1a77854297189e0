"""Static SVG emission with reproducible bytes (no display backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["line_plot", "field_plot"]

_STYLE = {
    "svg.hashsalt": "kreinlab",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.5),
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def line_plot(
    path,
    x: Sequence[float],
    series: Dict[str, Sequence[float]],
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
    logx: bool = False,
    logy: bool = False,
) -> Path:
    """One line per entry of ``series`` against ``x``."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(x, y, marker="o", ms=3, lw=1.2, label=label)
        ax.set_xscale("log" if logx else "linear")
        ax.set_yscale("log" if logy else "linear")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False)
        return _save(fig, path)


def field_plot(path, coords: np.ndarray, values: np.ndarray, title: str = "", label: Optional[str] = None) -> Path:
    """Scatter-coloured nodal field on a 2D grid."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        sc = ax.scatter(coords[:, 0], coords[:, 1], c=values, s=18, cmap="viridis", marker="s")
        fig.colorbar(sc, ax=ax, label=label or "")
        ax.set_aspect("equal")
        ax.grid(False)
        if title:
            ax.set_title(title)
        return _save(fig, path)
