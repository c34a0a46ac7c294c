"""Static PNG rendering of reproduced figures (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reproduce import FigureResult, Panel  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.2,
}


def _series(result: FigureResult, panel: Panel):
    """Yield ``(label, x, y)`` for every curve of a panel."""
    names = panel.tables or [panel.table]
    for name in names:
        table = result.tables[name]
        cols = table.columns
        x = table.rows[:, cols.index(panel.x)]
        for ycol in panel.y:
            y = table.rows[:, cols.index(ycol)]
            if panel.normalize:
                span = np.nanmax(y) - np.nanmin(y)
                y = y / span if span > 0 else y
            label = name if len(names) > 1 else ycol
            yield label, x, y


def _symlog_threshold(values):
    finite = np.abs(values[np.isfinite(values) & (values != 0)])
    return float(finite.min()) if finite.size else 1.0


def draw_panel(ax, result: FigureResult, panel: Panel):
    xs = []
    for label, x, y in _series(result, panel):
        ax.plot(x, y, label=label)
        xs.append(x)
    for axis, scale in (("x", panel.xscale), ("y", panel.yscale)):
        setter = ax.set_xscale if axis == "x" else ax.set_yscale
        if scale == "symlog":
            ref = np.concatenate(xs) if axis == "x" else np.concatenate(
                [line.get_ydata() for line in ax.get_lines()])
            thresh = panel.linthresh if axis == "x" and panel.linthresh else _symlog_threshold(ref)
            setter("symlog", linthresh=thresh)
        else:
            setter(scale)
    ax.set_xlabel(panel.xlabel)
    ax.set_ylabel(panel.ylabel)
    if len(ax.get_lines()) > 1:
        ax.legend(loc="best")


def render(result: FigureResult, path, note: str | None = None) -> Path:
    """Draw every panel of ``result`` into one PNG file."""
    path = Path(path)
    n = len(result.panels)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, 1, figsize=(6.0, 3.2 * n), squeeze=False)
        for ax, panel in zip(axes[:, 0], result.panels):
            draw_panel(ax, result, panel)
        status = "pass" if result.passed else "FAIL"
        fig.suptitle(f"{result.figure} ({status})")
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None, "Description": note})
        plt.close(fig)
    return path
