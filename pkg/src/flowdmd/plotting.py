"""Figures: singular-value spectra and per-pair forecast curves.

Figures are rendered through matplotlib's object API (no pyplot state) and
written as SVG with the date stamp and random ids pinned, so the same
inputs always produce the same bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from .errors import ShapeError

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "flowdmd",
    "svg.fonttype": "none",
}

FIGSIZE = (6.0, 3.8)


def save_svg(fig: Figure, path) -> Path:
    path = Path(path)
    with mpl.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    return path


def spectrum_figure(sigma: Sequence[float], title: str | None = None) -> Figure:
    """Singular values against their 1-based index on a log axis."""
    sigma = np.asarray(sigma, dtype=float)
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=FIGSIZE)
        ax = fig.add_subplot()
        idx = np.arange(1, sigma.size + 1)
        positive = sigma > 0
        ax.semilogy(idx[positive], sigma[positive], "o", markersize=3, color="C0")
        ax.set_xlabel("index")
        ax.set_ylabel("singular value")
        if title:
            ax.set_title(title)
        ax.grid(True, which="major", alpha=0.3)
    return fig


def pair_figure(weeks: Sequence[float], truth: Sequence[float] | None,
                forecasts: Mapping[str, Sequence[float]], title: str | None = None,
                ylabel: str = "visitor flow") -> Figure:
    """Truth series plus one forecast curve per label, all on the same week axis.

    NaN entries leave gaps (weeks a forecast does not cover).
    """
    weeks = np.asarray(weeks, dtype=float)
    if truth is not None and len(truth) != weeks.size:
        raise ShapeError(f"truth has {len(truth)} points for {weeks.size} weeks")
    for label, series in forecasts.items():
        if len(series) != weeks.size:
            raise ShapeError(f"forecast {label!r} has {len(series)} points for {weeks.size} weeks")

    with mpl.rc_context(STYLE):
        fig = Figure(figsize=FIGSIZE)
        ax = fig.add_subplot()
        if truth is not None:
            ax.plot(weeks, truth, color="k", label="real data")
        for n, (label, series) in enumerate(forecasts.items()):
            ax.plot(weeks, series, linestyle="--", color=f"C{n}", label=label)
        ax.set_xlabel("week")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        ax.grid(True, alpha=0.3)
    return fig
