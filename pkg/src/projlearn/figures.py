"""Matplotlib renderings of projections, gradient maps, and strips.

These complement the raw PPM/PGM rasters with annotated, human-friendly
PNG figures: axes, colorbars, and the gradient statistics printed in the
image corners. All rendering uses the Agg backend and every file is
written atomically.
"""

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError
from .evaluation import GradientMap
from .fileio import atomic_write_bytes
from .rasters import PALETTE

_RGB = PALETTE.astype(np.float64) / 255.0


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight")
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def scatter_figure(coords, path, labels=None, title=None):
    """Colored scatter of 2D coordinates, one palette color per label."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] == 0:
        raise DataError("scatter needs a non-empty n x 2 coordinate array")
    if labels is None:
        labels = np.zeros(coords.shape[0], dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(coords[:, 0], coords[:, 1], s=12, c=_RGB[labels % 10], linewidths=0)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("projection x")
    ax.set_ylabel("projection y")
    if title:
        ax.set_title(title)
    _save(fig, path)


def gradient_figure(gm: GradientMap, path, title=None):
    """Grayscale image of a gradient map with the maximum printed in the
    bottom-left corner and the average in the bottom-right."""
    fig, ax = plt.subplots(figsize=(5.4, 5))
    image = ax.imshow(gm.values, origin="lower", cmap="gray", aspect="auto",
                      extent=(*gm.x_range, *gm.y_range))
    fig.colorbar(image, ax=ax, label="gradient magnitude")
    for x, text, align in ((0.02, f"max {gm.max_gradient:.4g}", "left"),
                           (0.98, f"avg {gm.avg_gradient:.4g}", "right")):
        ax.text(x, 0.02, text, transform=ax.transAxes, ha=align, va="bottom",
                color="white", fontsize=10,
                bbox=dict(facecolor="black", alpha=0.5, pad=2))
    ax.set_xlabel("projection x")
    ax.set_ylabel("projection y")
    if title:
        ax.set_title(title)
    _save(fig, path)


def strip_figure(vectors, path, image_shape=None, title=None):
    """Decoded samples along an interpolation line.

    Image-shaped vectors render as a row of grayscale tiles; generic
    vectors render as one component-profile line per sample, shaded from
    first (dark) to last (light)."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    k = vectors.shape[0]
    if image_shape is not None:
        rows, cols = int(image_shape[0]), int(image_shape[1])
        if rows * cols != vectors.shape[1]:
            raise DataError(
                f"cannot reshape {vectors.shape[1]}-dimensional vectors to "
                f"{rows}x{cols} tiles")
        fig, axes = plt.subplots(1, k, figsize=(1.2 * k, 1.6))
        for i, ax in enumerate(np.atleast_1d(axes)):
            ax.imshow(np.clip(vectors[i], 0.0, 1.0).reshape(rows, cols),
                      cmap="gray", vmin=0.0, vmax=1.0)
            ax.set_xticks([])
            ax.set_yticks([])
            ax.set_xlabel(str(i), fontsize=8)
    else:
        fig, ax = plt.subplots(figsize=(6, 4))
        shades = plt.get_cmap("viridis")(np.linspace(0.0, 0.9, k))
        for i in range(k):
            ax.plot(vectors[i], color=shades[i], linewidth=1.2)
        ax.set_xlabel("component")
        ax.set_ylabel("decoded value")
    if title:
        fig.suptitle(title)
    _save(fig, path)


def scan_figure(points, path, xkey, title=None):
    """Mean errors (with sd bars) against a swept loss weight, log-x."""
    if not points:
        raise DataError("scan figure needs at least one grid point")
    x = [p.weights[xkey] for p in points]
    fig, ax = plt.subplots(figsize=(6, 4))
    for attr, label, color in (("parametric", "parametric error", _RGB[0]),
                               ("inverse", "inverse error", _RGB[1])):
        means = [getattr(p.report, f"{attr}_mean") for p in points]
        sds = [getattr(p.report, f"{attr}_sd") for p in points]
        ax.errorbar(x, means, yerr=sds, color=color, marker="o",
                    capsize=3, label=label)
    ax.set_xscale("log")
    ax.set_xlabel(xkey)
    ax.set_ylabel("mean squared error")
    ax.legend(fontsize=9)
    if title:
        ax.set_title(title)
    _save(fig, path)


def loss_figure(histories, path, title=None):
    """Per-epoch loss components for one or more training runs; each
    history is a list of per-epoch {component: value} dicts."""
    if not histories:
        raise DataError("loss figure needs at least one history")
    fig, ax = plt.subplots(figsize=(6, 4))
    components = list(histories[0][0])
    shades = plt.get_cmap("tab10")(np.arange(len(components)) % 10)
    for history in histories:
        for j, name in enumerate(components):
            ax.plot([epoch[name] for epoch in history], color=shades[j],
                    linewidth=1.0, alpha=0.8)
    for j, name in enumerate(components):
        ax.plot([], color=shades[j], label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path)
