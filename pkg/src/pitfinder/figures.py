"""Report figures rendered next to the delimited metrics output."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .imaging import DamageMask, DisparityImage, GrayImage
from .metrics import EvalReport
from .roadmodel import RoadDisparityModel, VDisparityMap


def save_metrics_chart(reports: list[EvalReport], path) -> None:
    """Bar chart of per-image IoU and F-score with mean reference lines."""
    rows = [r for r in reports if r.image_id != "mean"]
    if not rows:
        return
    ids = [r.image_id for r in rows]
    iou = [r.iou for r in rows]
    fsc = [r.f_score for r in rows]
    pos = np.arange(len(rows))
    width = max(6.0, 0.45 * len(rows) + 2.0)
    fig, ax = plt.subplots(figsize=(width, 4.0))
    ax.bar(pos - 0.2, iou, width=0.4, label="IoU", color="#3b6fb6")
    ax.bar(pos + 0.2, fsc, width=0.4, label="F-score", color="#d18636")
    ax.axhline(float(np.mean(iou)), color="#3b6fb6", ls="--", lw=1,
               label=f"mean IoU {np.mean(iou):.3f}")
    ax.axhline(float(np.mean(fsc)), color="#d18636", ls="--", lw=1,
               label=f"mean F {np.mean(fsc):.3f}")
    ax.set_xticks(pos)
    ax.set_xticklabels(ids, rotation=60, ha="right", fontsize=7)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_detection_panels(disp: DisparityImage, transformed: GrayImage,
                          mask: DamageMask, path, gt: np.ndarray | None = None) -> None:
    """2x2 panel: input disparity, flattened raster, detection, optional truth."""
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    shown = np.where(disp.valid, disp.values, np.nan)
    im0 = axes[0, 0].imshow(shown, cmap="viridis")
    axes[0, 0].set_title("disparity")
    fig.colorbar(im0, ax=axes[0, 0], fraction=0.046)
    flattened = np.where(disp.valid, transformed.values, np.nan)
    im1 = axes[0, 1].imshow(flattened, cmap="viridis")
    axes[0, 1].set_title("flattened")
    fig.colorbar(im1, ax=axes[0, 1], fraction=0.046)
    axes[1, 0].imshow(mask.damaged, cmap="gray")
    axes[1, 0].set_title(f"detected damage ({mask.region_count} regions)")
    if gt is not None:
        overlay = np.zeros(mask.damaged.shape + (3,))
        overlay[..., 0] = mask.damaged & ~gt          # red: false positive
        overlay[..., 1] = mask.damaged & gt           # green: hit
        overlay[..., 2] = ~mask.damaged & gt          # blue: miss
        axes[1, 1].imshow(overlay)
        axes[1, 1].set_title("vs ground truth (G hit / R extra / B miss)")
    else:
        axes[1, 1].axis("off")
    for ax in axes.flat:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_v_disparity_figure(vmap: VDisparityMap, path,
                            model: RoadDisparityModel | None = None,
                            column: float = 0.0) -> None:
    """Log-count view of the row/disparity histogram, with the model locus."""
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.imshow(np.log1p(vmap.counts), aspect="auto", cmap="magma",
              extent=(0, vmap.bins * vmap.bin_width, vmap.rows, 0))
    if model is not None:
        v = np.arange(vmap.rows)
        ax.plot(model.predict(column, v), v, color="cyan", lw=1.0,
                label=f"model at u={column:g}")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("disparity (px)")
    ax.set_ylabel("image row v")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
