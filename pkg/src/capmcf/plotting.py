"""Matplotlib figures of a finished run, rendered from its output files."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import polygon_area
from .output import read_contours

__all__ = ["render_report"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_report(out_dir, *, dpi: int = 120) -> list[Path]:
    """Draw ``contours.png`` (and ``diagnostics.png`` if a manifest exists).

    Reads ``contours.csv`` in ``out_dir``; frames are colored by time.
    Returns the written image paths.
    """
    plt = _pyplot()
    out = Path(out_dir)
    frames = read_contours(out / "contours.csv")
    manifest = None
    if (out / "manifest.json").exists():
        manifest = json.loads((out / "manifest.json").read_text())
    written = []

    fig, ax = plt.subplots(figsize=(6, 6))
    ks = sorted(frames)
    cmap = plt.get_cmap("viridis")
    for i, k in enumerate(ks):
        color = cmap(i / max(len(ks) - 1, 1))
        for c in frames[k]["polys"]:
            ax.plot(c[:, 0], c[:, 1], color=color, lw=0.8)
    if manifest is not None:
        ax_, bx, ay, by = manifest["config"]["domain"]
        ax.set_xlim(ax_, bx)
        ax.set_ylim(ay, by)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if ks:
        ax.set_title(f"zero contours, t = {frames[ks[0]]['t']:.4g} .. {frames[ks[-1]]['t']:.4g}")
    fig.tight_layout()
    p = out / "contours.png"
    fig.savefig(p, dpi=dpi)
    plt.close(fig)
    written.append(p)

    closed = [k for k in ks if frames[k]["polys"]
              and all(np.array_equal(c[0], c[-1]) for c in frames[k]["polys"])]
    if manifest is not None or closed:
        fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
        if manifest is not None and manifest["iterations"]:
            its = np.asarray(manifest["iterations"])
            axes[0].plot(np.arange(1, len(its) + 1), its, lw=0.6)
            axes[0].set_xlabel("step")
            axes[0].set_ylabel("split Bregman iterations")
        if closed:
            areas = [sum(abs(polygon_area(c)) for c in frames[k]["polys"]) for k in closed]
            axes[1].plot([frames[k]["t"] for k in closed], areas, "o-")
            axes[1].set_xlabel("t")
            axes[1].set_ylabel("enclosed area")
        fig.tight_layout()
        p = out / "diagnostics.png"
        fig.savefig(p, dpi=dpi)
        plt.close(fig)
        written.append(p)
    return written
