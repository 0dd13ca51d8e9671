"""Optional figures written next to the CSV outputs (``--plots``)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .solver import Surface  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def surface_plot(surf: Surface, path, title: str = "", x0=None, window: float | None = None) -> Path:
    X1, X2 = surf.grid.mesh()
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    V = surf.values
    if window is not None:
        k1 = surf.grid.axis1.nodes <= window
        k2 = surf.grid.axis2.nodes <= window
        X1, X2, V = X1[np.ix_(k1, k2)], X2[np.ix_(k1, k2)], V[np.ix_(k1, k2)]
    cs = ax.contourf(X1, X2, V, levels=30, cmap="viridis")
    fig.colorbar(cs, ax=ax)
    if x0 is not None:
        ax.plot(*x0, "w+", ms=10)
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    ax.set_title(title)
    return _save(fig, path)


def ladder_plot(ladders, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for lad in ladders:
        ns = [lv.n for lv in lad.levels[1:]]
        lab = f"{lad.axis}, {'on' if lad.flag else 'off'}"
        ax.loglog(ns, [lv.l2 for lv in lad.levels[1:]], "o-", label=f"{lab} l2 ({lad.slope_l2:.2f})")
        ax.loglog(ns, [lv.linf for lv in lad.levels[1:]], "s--", label=f"{lab} linf ({lad.slope_linf:.2f})")
    ax.set_xlabel("n")
    ax.set_ylabel("difference to previous level")
    ax.legend(fontsize=7)
    return _save(fig, path)


def stability_plot(P1, P2, absT, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    cs = ax.pcolormesh(P1, P2, absT, shading="auto", cmap="magma")
    fig.colorbar(cs, ax=ax, label="|T|")
    ax.set_xlabel(r"$\phi_1$")
    ax.set_ylabel(r"$\phi_2$")
    return _save(fig, path)


def mc_plot(rows, path) -> Path:
    """``rows``: (name, pide, mc, stderr)."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    x = np.arange(len(rows))
    ax.bar(x - 0.2, [r[1] for r in rows], 0.4, label="PIDE")
    ax.bar(x + 0.2, [r[2] for r in rows], 0.4, yerr=[3 * r[3] for r in rows], label="MC (3 SE)")
    ax.set_xticks(x, [r[0] for r in rows], rotation=30, fontsize=8)
    ax.legend()
    return _save(fig, path)


def trace_plot(trace, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.semilogy([t[0] for t in trace], [max(t[1], 1e-300) for t in trace], "o-")
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost")
    return _save(fig, path)
