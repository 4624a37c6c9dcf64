"""Raster figures with matplotlib (Agg backend); the SVG output in io needs no renderer."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_profiles(path, curves, cylinder_radius=None, cone_slope=None, title=None):
    """PNG of overlaid profile curves [(label, x, r), ...]."""
    fig, ax = plt.subplots(figsize=(7, 4.5), dpi=120)
    for label, x, r in curves:
        ax.plot(x, r, lw=1.4, label=label)
    ax.axhline(0, color="0.6", ls="--", lw=0.8)
    ax.axvline(0, color="0.6", ls="--", lw=0.8)
    if cylinder_radius:
        ax.axhline(cylinder_radius, color="0.4", ls="--", lw=0.8, label="cylinder")
    if cone_slope:
        xe = np.array([0.0, ax.get_xlim()[1]])
        ax.plot(xe, cone_slope * xe, color="0.3", ls=":", lw=0.8, label="cone")
    ax.set_xlabel("x")
    ax.set_ylabel("r")
    ax.set_aspect("equal", adjustable="datalim")
    if title:
        ax.set_title(title)
    if len(curves) > 1 or cylinder_radius:
        ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_linearized(path, r, g, zero=None):
    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    ax.plot(r, g, lw=1.4, label="g")
    ax.plot(r, r, color="0.5", ls=":", lw=0.8, label="r")
    ax.axhline(0, color="0.6", ls="--", lw=0.8)
    if zero is not None and np.isfinite(zero):
        ax.axvline(zero, color="0.4", ls="--", lw=0.8)
    ax.set_xlabel("r")
    ax.set_ylim(min(-3.0, float(np.min(g[r > 0.05]))), float(np.max(g)))
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
