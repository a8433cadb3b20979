"""Gaze fixations -> supervision heatmaps at attention-map resolution.

Each fixation becomes an isotropic Gaussian rendered directly on the small
attention grid and normalized to unit mass per timestamp. Coordinates are
mapped between resolutions with the pixel-center convention, which makes a
horizontal flip of the gaze produce exactly the mirrored heatmap.
"""

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError

DEFAULT_SIGMA = 1.5  # in heatmap cells


def scale_coord(x, src_size: int, dst_size: int):
    """Map pixel coordinate(s) between resolutions (pixel-center convention)."""
    return (np.asarray(x, dtype=np.float64) + 0.5) * (dst_size / src_size) - 0.5


def flip_gaze(x, frame_width: int):
    """Mirror a gaze x-coordinate for horizontally flipped frames."""
    return frame_width - 1 - x


def gaze_to_heatmap(gx, gy, frame_width, frame_height, target_w, target_h,
                    sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Render one fixation as a normalized (target_h, target_w) Gaussian.

    Out-of-frame fixations are clamped to the nearest border cell first.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    cx = np.clip(scale_coord(gx, frame_width, target_w), 0, target_w - 1)
    cy = np.clip(scale_coord(gy, frame_height, target_h), 0, target_h - 1)
    ii = np.arange(target_h, dtype=np.float64)[:, None]
    jj = np.arange(target_w, dtype=np.float64)[None, :]
    g = np.exp(-((ii - cy) ** 2 + (jj - cx) ** 2) / (2.0 * sigma**2))
    return g / g.sum()


def temporal_centers(clip_len: int, attn_len: int) -> np.ndarray:
    """Clip-frame indices supervising each attention timestamp.

    With temporal striding the attention map has attn_len <= clip_len
    timestamps; each is supervised by the gaze at the center of its stride
    window (e.g. 16 frames -> 8 timestamps uses frames 1, 3, ..., 15).
    """
    if attn_len < 1 or clip_len % attn_len != 0:
        raise ValidationError(
            f"attention length {attn_len} does not evenly divide clip "
            f"length {clip_len}"
        )
    stride = clip_len // attn_len
    return np.arange(attn_len) * stride + stride // 2


def heatmap_volume(clip_gaze, frame_width, frame_height, target_w, target_h,
                   attn_len=None, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Render heatmaps for a clip's gaze track, one map per attention timestamp.

    clip_gaze: (T, 2) or batched (B, T, 2) pixel coordinates (x, y).
    Returns (T', target_h, target_w) or (B, T', target_h, target_w) float64.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    gaze = np.asarray(clip_gaze, dtype=np.float64)
    batched = gaze.ndim == 3
    if not batched:
        gaze = gaze[None]
    if gaze.ndim != 3 or gaze.shape[-1] != 2:
        raise ShapeError(f"clip gaze must be (T,2) or (B,T,2), got {gaze.shape}")
    t = gaze.shape[1]
    centers = temporal_centers(t, attn_len if attn_len is not None else t)
    gaze = gaze[:, centers]
    cx = np.clip(scale_coord(gaze[..., 0], frame_width, target_w), 0, target_w - 1)
    cy = np.clip(scale_coord(gaze[..., 1], frame_height, target_h), 0, target_h - 1)
    ii = np.arange(target_h, dtype=np.float64)
    jj = np.arange(target_w, dtype=np.float64)
    d2 = (
        (ii[None, None, :, None] - cy[..., None, None]) ** 2
        + (jj[None, None, None, :] - cx[..., None, None]) ** 2
    )
    maps = np.exp(-d2 / (2.0 * sigma**2))
    maps /= maps.sum(axis=(-2, -1), keepdims=True)
    return maps if batched else maps[0]


def gaze_in_frame_mask(clip_gaze, frame_width, frame_height, attn_len=None):
    """Boolean mask of attention timestamps whose gaze lies inside the frame.

    Companion to heatmap_volume for the skip-out-of-frame supervision mode.
    """
    gaze = np.asarray(clip_gaze, dtype=np.float64)
    batched = gaze.ndim == 3
    if not batched:
        gaze = gaze[None]
    t = gaze.shape[1]
    centers = temporal_centers(t, attn_len if attn_len is not None else t)
    gaze = gaze[:, centers]
    ok = (
        (gaze[..., 0] >= 0)
        & (gaze[..., 0] <= frame_width - 1)
        & (gaze[..., 1] >= 0)
        & (gaze[..., 1] <= frame_height - 1)
    )
    return ok if batched else ok[0]


def grid_cells(clip_gaze, frame_width, frame_height, target_w, target_h,
               attn_len=None) -> np.ndarray:
    """Nearest heatmap cell (col, row) per attention timestamp, clamped."""
    gaze = np.asarray(clip_gaze, dtype=np.float64)
    batched = gaze.ndim == 3
    if not batched:
        gaze = gaze[None]
    t = gaze.shape[1]
    centers = temporal_centers(t, attn_len if attn_len is not None else t)
    gaze = gaze[:, centers]
    cx = np.clip(scale_coord(gaze[..., 0], frame_width, target_w), 0, target_w - 1)
    cy = np.clip(scale_coord(gaze[..., 1], frame_height, target_h), 0, target_h - 1)
    cells = np.stack([np.rint(cx), np.rint(cy)], axis=-1).astype(np.int64)
    return cells if batched else cells[0]
