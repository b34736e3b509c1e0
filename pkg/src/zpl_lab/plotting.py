"""Self-contained SVG plots (optional; needs matplotlib).

Output is reproducible: fixed hash salt and no date metadata.
"""

from __future__ import annotations

import numpy as np

_SALT = "zpl-lab"


def _figure():
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = _SALT
    from matplotlib.backends.backend_svg import FigureCanvasSVG
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6.0, 4.0))
    FigureCanvasSVG(fig)
    return fig


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})


def line_plot(path, x, y, *, xlabel: str, ylabel: str, title: str = "", fit=None, style: str = "-") -> None:
    """``fit`` is an optional ``(x, y)`` overlay drawn as a solid line."""
    fig = _figure()
    ax = fig.add_subplot()
    ax.plot(np.asarray(x), np.asarray(y), style, ms=3, lw=1)
    if fit is not None:
        ax.plot(np.asarray(fit[0]), np.asarray(fit[1]), "-", lw=1.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    _save(fig, path)


def heat_map(path, x_edges, y_edges, z, *, xlabel: str, ylabel: str, title: str = "") -> None:
    """``z`` is indexed [iy, ix]."""
    fig = _figure()
    ax = fig.add_subplot()
    mesh = ax.pcolormesh(np.asarray(x_edges), np.asarray(y_edges), np.asarray(z), shading="flat")
    fig.colorbar(mesh, ax=ax, label="counts")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    _save(fig, path)
