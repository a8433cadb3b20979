"""Synthetic surrogate dataset: moving instrument blobs on texture.

Each trial is a sequence of gesture segments. A gesture class is a distinct
two-blob motion pattern:

    class 0  approach   blobs sweep together along a shared axis, then hold
                        close with a slight wobble
    class 1  crossover  one blob overtakes the other on offset parallel
                        rails, so the pair drifts steadily across the scene
    class 2  orbit      blobs revolve around a common center, constant gap
    class 3  retract    blobs sweep apart, then hold far

Every window is class-informative: during a radial sweep the gap changes at
~2 px/frame with a sign that separates approach from retract, and during
the dwell the pair distance itself does (close vs. far); crossover is the
only class with persistent common-mode translation; orbit the only one with
pair rotation at constant gap. Per-user style jitter (speed, spatial
offset) makes leave-one-user-out folds differ. The whole dataset is a pure
function of (seed, config): every trial draws from its own rng seeded by
(seed, user, trial), so regeneration is byte-identical and trials could be
rendered in parallel.

Gaze is the active blob's centroid plus isotropic Gaussian noise, clamped
into the frame.
"""

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .labels import class_list, gesture_name
from .transcripts import Segment
from .trials import save_dataset_manifest, save_trial_dir

PATTERN_NAMES = ("approach", "crossover", "orbit", "retract")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    num_users: int = 8
    trials_per_user: int = 4
    height: int = 64
    width: int = 64
    num_classes: int = 4
    fps: int = 5
    min_segments: int = 8
    max_segments: int = 12
    min_segment_frames: int = 20
    max_segment_frames: int = 60
    gaze_noise: float = 2.0
    blob_sigma: float = 2.4

    def __post_init__(self):
        if self.num_users < 1 or self.trials_per_user < 1:
            raise ConfigError("need at least one user and one trial per user")
        if self.min_segment_frames < 2:
            raise ConfigError("segments must span at least 2 frames")
        if self.min_segments > self.max_segments:
            raise ConfigError("min_segments > max_segments")
        if self.min_segment_frames > self.max_segment_frames:
            raise ConfigError("min_segment_frames > max_segment_frames")


@dataclass(frozen=True)
class _UserStyle:
    speed: float
    offset_x: float
    offset_y: float


def _user_style(seed: int, user_index: int) -> _UserStyle:
    rng = np.random.default_rng([seed, 1000 + user_index])
    return _UserStyle(
        speed=float(rng.uniform(0.8, 1.2)),
        offset_x=float(rng.uniform(-6.0, 6.0)),
        offset_y=float(rng.uniform(-6.0, 6.0)),
    )


def _bilinear_upsample(coarse: np.ndarray, height: int, width: int) -> np.ndarray:
    """(gh, gw, 3) -> (height, width, 3) bilinear interpolation."""
    gh, gw = coarse.shape[:2]
    ys = np.linspace(0, gh - 1, height)
    xs = np.linspace(0, gw - 1, width)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = coarse[y0][:, x0] * (1 - fx) + coarse[y0][:, x1] * fx
    bot = coarse[y1][:, x0] * (1 - fx) + coarse[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def _segment_positions(pattern: int, variant: int, frames: int, rng,
                       style: _UserStyle, height: int, width: int):
    """(frames, 2 blobs, 2) xy positions plus the active blob index."""
    t = np.arange(frames, dtype=np.float64)
    cx = width / 2 + style.offset_x + rng.uniform(-6.0, 6.0)
    cy = height / 2 + style.offset_y + rng.uniform(-6.0, 6.0)
    theta = rng.uniform(0, 2 * np.pi)
    pace = style.speed * rng.uniform(0.9, 1.1) * (1.0 + 0.2 * variant)
    axis = np.array([np.cos(theta), np.sin(theta)])
    perp = np.array([-axis[1], axis[0]])
    r_min = 2.5
    r_max = rng.uniform(15.0, 18.0)

    if pattern in (0, 3):
        # radial patterns: one fast sweep (gap changes ~2.8 px/frame), then a
        # dwell with a gentle breathing wobble; no teleports, and dwell
        # windows separate by pair distance (approach holds close, retract
        # holds far) while sweep windows separate by gap-change rate
        speed = 1.4 * pace
        ramp = np.minimum(speed * t, r_max - r_min)
        wobble = 1.0 * np.sin(
            2 * np.pi * t / rng.uniform(10.0, 14.0) + rng.uniform(0, 2 * np.pi)
        )
        r = (r_max - ramp) if pattern == 0 else (r_min + ramp)
        r = np.clip(r + wobble, r_min, r_max)
        p0 = np.array([cx, cy]) + r[:, None] * axis
        p1 = np.array([cx, cy]) - r[:, None] * axis
    elif pattern == 1:
        # overtaking: both blobs translate the same way on straight rails,
        # one twice as fast; a slow persistent common-mode drift unique to
        # this class
        amp = rng.uniform(12.0, 16.0)
        off = rng.uniform(6.0, 9.0)
        v_fast = 0.85 * pace
        fast = -amp + np.mod(rng.uniform(0, 2 * amp) + v_fast * t, 2 * amp)
        slow = -amp + np.mod(rng.uniform(0, 2 * amp) + (v_fast / 2) * t,
                             2 * amp)
        p0 = np.array([cx, cy]) + fast[:, None] * axis + off * perp
        p1 = np.array([cx, cy]) + slow[:, None] * axis - off * perp
    elif pattern == 2:
        # orbit: tight fast revolution, so individual blob paths curve
        # visibly within a window (~0.15-0.2 rad/frame)
        radius = rng.uniform(6.0, 9.0)
        direction = rng.choice([-1.0, 1.0])
        speed = 1.3 * pace
        phi = theta + direction * (speed / radius) * t
        ring = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        p0 = np.array([cx, cy]) + radius * ring
        p1 = np.array([cx, cy]) - radius * ring
    else:
        raise ConfigError(f"no pattern {pattern}")
    active = int(rng.integers(0, 2))
    return np.stack([p0, p1], axis=1), active


# Instrument blob tints (RGB in [0,1]); one per blob.
_BLOB_COLORS = np.array([[0.25, 0.95, 0.85], [1.0, 0.6, 0.2]])


def _render_trial(cfg: SynthConfig, rng, style: _UserStyle):
    """Render one trial -> (frames uint8, segments, gaze float, class frame counts)."""
    n_segments = int(rng.integers(cfg.min_segments, cfg.max_segments + 1))
    deal: list[int] = []
    while len(deal) < n_segments:
        deal.extend(rng.permutation(cfg.num_classes).tolist())
    classes = deal[:n_segments]

    coarse = rng.uniform(0.3, 0.5, size=(9, 9, 3))
    background = _bilinear_upsample(coarse, cfg.height, cfg.width)

    yy = np.arange(cfg.height, dtype=np.float64)[:, None]
    xx = np.arange(cfg.width, dtype=np.float64)[None, :]
    two_sigma_sq = 2.0 * cfg.blob_sigma**2

    all_frames = []
    segments = []
    gaze_points = []
    class_frames = np.zeros(cfg.num_classes, dtype=np.int64)
    cursor = 0
    gesture_ids = class_list(cfg.num_classes)
    for cls in classes:
        frames_n = int(
            rng.integers(cfg.min_segment_frames, cfg.max_segment_frames + 1)
        )
        positions, active = _segment_positions(
            cls % len(PATTERN_NAMES), cls // len(PATTERN_NAMES),
            frames_n, rng, style, cfg.height, cfg.width,
        )
        block = np.broadcast_to(
            background, (frames_n, cfg.height, cfg.width, 3)
        ).copy()
        for blob in range(2):
            bx = positions[:, blob, 0][:, None, None]
            by = positions[:, blob, 1][:, None, None]
            field = np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / two_sigma_sq)
            block += 0.8 * field[..., None] * _BLOB_COLORS[blob]
        all_frames.append(
            (np.clip(block, 0.0, 1.0) * 255.0).round().astype(np.uint8)
        )
        noise = rng.normal(0.0, cfg.gaze_noise, size=(frames_n, 2))
        g = positions[:, active] + noise
        g[:, 0] = np.clip(g[:, 0], 0, cfg.width - 1)
        g[:, 1] = np.clip(g[:, 1], 0, cfg.height - 1)
        gaze_points.append(g)
        segments.append(
            Segment(cursor, cursor + frames_n - 1, gesture_ids[cls])
        )
        class_frames[cls] += frames_n
        cursor += frames_n
    return (
        np.concatenate(all_frames, axis=0),
        segments,
        np.concatenate(gaze_points, axis=0),
        class_frames,
    )


def synth_generate(out_dir, cfg: SynthConfig = SynthConfig()) -> dict:
    """Generate and persist the synthetic dataset; returns a summary dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gesture_ids = class_list(cfg.num_classes)
    users = [f"U{u + 1}" for u in range(cfg.num_users)]
    trial_records = []
    totals = np.zeros(cfg.num_classes, dtype=np.int64)
    total_frames = 0
    for u, user in enumerate(users):
        style = _user_style(cfg.seed, u)
        for k in range(cfg.trials_per_user):
            rng = np.random.default_rng([cfg.seed, u, k])
            frames, segments, gaze, class_frames = _render_trial(cfg, rng, style)
            trial_id = f"{user}_{k + 1:03d}"
            save_trial_dir(out_dir / "trials" / trial_id, frames, segments, gaze)
            trial_records.append(
                {
                    "trial_id": trial_id,
                    "user_id": user,
                    "num_frames": int(len(frames)),
                }
            )
            totals += class_frames
            total_frames += len(frames)
    save_dataset_manifest(
        out_dir,
        fps=cfg.fps,
        height=cfg.height,
        width=cfg.width,
        class_ids=gesture_ids,
        users=users,
        trial_records=trial_records,
        seed=cfg.seed,
    )
    return {
        "out_dir": str(out_dir),
        "config": asdict(cfg),
        "num_trials": len(trial_records),
        "num_frames": int(total_frames),
        "class_frames": {
            gesture_name(g): int(n) for g, n in zip(gesture_ids, totals)
        },
    }
