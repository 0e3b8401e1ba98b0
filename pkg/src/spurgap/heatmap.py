"""Vector-image rendering of gap grids: diverging colormap centered at zero,
red for positive gaps (perturbation helped), blue for negative."""

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .sweep import GapGrid  # noqa: E402

__all__ = ["symmetric_limits", "render_heatmap"]

# an all-zero grid still needs a finite color range for the midpoint color
MIN_COLOR_RANGE = 1e-12


def symmetric_limits(values) -> tuple[float, float]:
    """Color limits symmetric about zero so the midpoint maps to gap = 0."""
    finite = np.asarray(values, dtype=float)
    finite = finite[np.isfinite(finite)]
    peak = float(np.max(np.abs(finite))) if finite.size else 0.0
    peak = max(peak, MIN_COLOR_RANGE)
    return -peak, peak


def render_heatmap(grid: GapGrid, out_path) -> Path:
    """Write the grid as a self-contained vector image (SVG by default)."""
    out_path = Path(out_path)
    vmin, vmax = symmetric_limits(grid.values)
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    mesh = ax.pcolormesh(
        grid.mu1_axis, grid.mu2_axis, grid.values,
        cmap="RdBu_r", vmin=vmin, vmax=vmax, shading="nearest",
    )
    ax.set_xlabel(r"$\mu_1$")
    ax.set_ylabel(r"$\mu_2$")
    meta = grid.metadata
    title = " ".join(
        str(meta[k]) for k in ("pipeline", "threat") if k in meta
    )
    extras = ", ".join(
        f"{k}={meta[k]}" for k in ("zeta", "eps") if k in meta
    )
    ax.set_title(f"balanced accuracy gap: {title}\n{extras}".strip())
    fig.colorbar(mesh, ax=ax, label="gap")
    fig.tight_layout()
    suffix = out_path.suffix.lstrip(".") or "svg"
    fig.savefig(out_path, format=suffix)
    plt.close(fig)
    return out_path
