"""Static heatmap-overlay rendering: activation map over a base image,
blue-to-red colormap, ground-truth boxes drawn in white."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .attnstore import GroundTruthRegion
from .extraction import ActivationMap, minmax, upsample


def render_overlay(
    amap: ActivationMap,
    base_image: np.ndarray | None,
    gt: GroundTruthRegion | None,
    out_path: str | Path,
    alpha: float = 0.6,
) -> None:
    side = amap.side
    fig, ax = plt.subplots(figsize=(4, 4), dpi=128)
    if base_image is not None:
        if base_image.shape[0] != side:
            base_image = upsample(base_image, side, "bilinear")
        ax.imshow(base_image, cmap="gray", vmin=0, vmax=max(1.0, base_image.max()))
        ax.imshow(minmax(amap.grid), cmap="jet", alpha=alpha, vmin=0, vmax=1)
    else:
        ax.imshow(minmax(amap.grid), cmap="jet", vmin=0, vmax=1)
    if gt is not None:
        for (x, y, w, h) in gt.boxes:
            ax.add_patch(
                Rectangle((x - 0.5, y - 0.5), w, h, fill=False,
                          edgecolor="white", linewidth=1.5)
            )
    ax.set_axis_off()
    fig.tight_layout(pad=0)
    fig.savefig(out_path)
    plt.close(fig)
