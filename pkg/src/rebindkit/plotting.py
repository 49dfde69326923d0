"""Figures for the experiment reports (PNG files, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings in the files, so reruns are byte-identical
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def artificial_figure(rows, path, title=""):
    """Bounds against nonreversibility (left) and real against minimal rebinding (right)."""
    ok = [r for r in rows if r["status"] == "ok"]
    nonrev = np.array([r["nonrev"] for r in ok])
    real = np.array([r["det_S_real"] for r in ok])
    opt = np.array([r["det_S_opt"] for r in ok])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.scatter(nonrev, opt, s=10, label="det S_opt")
    ax1.scatter(nonrev, real, s=10, marker="x", label="det S_real")
    ax1.set_xlabel("||D Q_c - Q_c^T D||_1")
    ax1.set_ylabel("det S")
    ax1.legend(loc="best", fontsize=8)
    ax2.scatter(real, opt, s=10)
    lim = [0, 1]
    ax2.plot(lim, lim, color="grey", lw=0.8)
    ax2.set_xlabel("det S_real")
    ax2.set_ylabel("det S_opt")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def grid_field_figure(field2d, path, title="", label=""):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(field2d, origin="upper", cmap="viridis")
    fig.colorbar(im, ax=ax, label=label)
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    return _save(fig, path)


def membership_figure(chi_grids, path, title="memberships"):
    n = len(chi_grids)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3))
    for j, (ax, g) in enumerate(zip(np.atleast_1d(axes), chi_grids)):
        im = ax.imshow(g, origin="upper", cmap="magma", vmin=min(0.0, g.min()), vmax=max(1.0, g.max()))
        ax.set_title(f"chi_{j + 1}")
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def metastability_figure(T, Pc, path, title=""):
    """Side-by-side heat maps of the coupling matrix and the projected transition matrix."""
    fig, axes = plt.subplots(1, 2, figsize=(7, 3.3))
    for ax, M, name in zip(axes, (T, Pc), ("T", "P_c = S^-1 T")):
        im = ax.imshow(M, vmin=0, vmax=1, cmap="Blues")
        ax.set_title(name)
        for (i, j), v in np.ndenumerate(M):
            ax.text(j, i, f"{v:.3f}", ha="center", va="center", fontsize=7)
        fig.colorbar(im, ax=ax, fraction=0.046)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)
