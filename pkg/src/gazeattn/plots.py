"""Publication-style plots: gesture timelines and attention overlays.

Gesture colors are fixed so figures stay comparable across runs:

    G1 #1f77b4   G2 #ff7f0e   G3 #2ca02c   G4 #d62728   G5 #9467bd
    G6 #8c564b   G8 #e377c2   G9 #7f7f7f   G10 #bcbd22  G11 #17becf

UNLABELED frames render light gray.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Patch

from .labels import GESTURE_IDS, UNLABELED, gesture_name

GESTURE_COLORS = {
    1: "#1f77b4",
    2: "#ff7f0e",
    3: "#2ca02c",
    4: "#d62728",
    5: "#9467bd",
    6: "#8c564b",
    8: "#e377c2",
    9: "#7f7f7f",
    10: "#bcbd22",
    11: "#17becf",
    UNLABELED: "#dddddd",
}


def _timeline_rgb(timeline) -> np.ndarray:
    """(N,) labels -> (1, N, 3) color strip."""
    strip = np.empty((1, len(timeline), 3))
    for i, label in enumerate(timeline):
        strip[0, i] = matplotlib.colors.to_rgb(GESTURE_COLORS[int(label)])
    return strip


def plot_timeline(gt_timeline, pred_timeline, path, title="") -> None:
    """Ribbon plot: ground-truth band above, prediction band below."""
    fig, axes = plt.subplots(
        2, 1, figsize=(10, 2.2), sharex=True,
        gridspec_kw={"hspace": 0.45},
    )
    n = len(gt_timeline)
    for ax, timeline, name in (
        (axes[0], gt_timeline, "ground truth"),
        (axes[1], pred_timeline, "prediction"),
    ):
        ax.imshow(
            _timeline_rgb(timeline), aspect="auto", interpolation="nearest",
            extent=(0, n, 0, 1),
        )
        ax.set_yticks([])
        ax.set_ylabel(name, rotation=0, ha="right", va="center", fontsize=9)
    axes[1].set_xlabel("frame")
    present = sorted(
        {int(v) for v in np.concatenate([gt_timeline, pred_timeline])}
        & set(GESTURE_IDS)
    )
    handles = [
        Patch(color=GESTURE_COLORS[g], label=gesture_name(g)) for g in present
    ]
    fig.legend(
        handles=handles, loc="upper center", ncol=max(len(handles), 1),
        bbox_to_anchor=(0.5, 1.18), fontsize=8, frameon=False,
    )
    if title:
        axes[0].set_title(title, fontsize=10)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def plot_attention_overlay(frames, attn, gaze_points, heat, path,
                           title="") -> None:
    """Frames with predicted attention and the gaze supervision target.

    frames: (T,H,W,3) in [0,1]; attn: (T',h,w); gaze_points: (T,2);
    heat: (T',h,w). One row per shown timestamp: raw frame with the gaze
    point, attention map overlay, gaze heatmap overlay.
    """
    frames = np.asarray(frames)
    t_attn = attn.shape[0]
    stride = frames.shape[0] // t_attn
    shown = list(range(t_attn))[: min(4, t_attn)]
    height, width = frames.shape[1:3]
    fig, axes = plt.subplots(
        len(shown), 3, figsize=(7.5, 2.5 * len(shown)), squeeze=False
    )
    for row, ti in enumerate(shown):
        frame_idx = ti * stride + stride // 2
        frame = frames[frame_idx]
        gx, gy = gaze_points[frame_idx]
        for col, (overlay, name) in enumerate(
            ((None, "frame"), (attn[ti], "attention"), (heat[ti], "gaze target"))
        ):
            ax = axes[row][col]
            ax.imshow(frame, extent=(0, width, height, 0))
            if overlay is not None:
                ax.imshow(
                    overlay, cmap="jet", alpha=0.45,
                    extent=(0, width, height, 0), interpolation="bilinear",
                )
            ax.plot(gx, gy, "wx", markersize=8, markeredgewidth=2)
            ax.set_xticks([])
            ax.set_yticks([])
            if row == 0:
                ax.set_title(name, fontsize=9)
        axes[row][0].set_ylabel(f"t={frame_idx}", fontsize=9)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
