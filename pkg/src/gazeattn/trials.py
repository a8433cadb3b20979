"""Trial containers, on-disk formats, sliding windows and LOUO folds.

A dataset directory looks like:

    <root>/dataset.json                     overall manifest
    <root>/trials/<trial_id>/frames.raw     uint8 RGB, C-order (N,H,W,3)
    <root>/trials/<trial_id>/frames.json    dims, count, dtype of frames.raw
    <root>/trials/<trial_id>/transcription.txt
    <root>/trials/<trial_id>/gaze.csv       header 'frame,x,y', one row/frame

Frames are stored as a single contiguous raw file plus a small manifest so
that byte-identical regeneration is trivial to verify.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .labels import UNLABELED, gesture_name
from .transcripts import (
    Segment,
    format_transcription,
    parse_transcription,
    segments_from_timeline,
    subsample_indices,
    timeline_from_segments,
)

DATASET_MANIFEST = "dataset.json"
FRAMES_RAW = "frames.raw"
FRAMES_MANIFEST = "frames.json"
TRANSCRIPTION = "transcription.txt"
GAZE_CSV = "gaze.csv"


@dataclass
class GazeTrack:
    """Per-frame fixation coordinates in pixel units, clamped into the frame."""

    points: np.ndarray  # (N, 2) float32, columns x, y
    frame_width: int
    frame_height: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        pts[:, 0] = np.clip(pts[:, 0], 0, self.frame_width - 1)
        pts[:, 1] = np.clip(pts[:, 1], 0, self.frame_height - 1)
        self.points = pts

    def __len__(self):
        return len(self.points)


@dataclass
class Trial:
    trial_id: str
    user_id: str
    num_frames: int
    fps: int
    segments: list[Segment]
    gaze: GazeTrack
    frames: np.ndarray | None = None  # (N, H, W, 3) uint8, None if not loaded
    _timeline: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for seg in self.segments:
            if seg.end_frame >= self.num_frames:
                raise ValidationError(
                    f"{self.trial_id}: segment [{seg.start_frame},{seg.end_frame}] "
                    f"outside [0,{self.num_frames})"
                )
        if len(self.gaze) != self.num_frames:
            raise ValidationError(
                f"{self.trial_id}: gaze track has {len(self.gaze)} points for "
                f"{self.num_frames} frames"
            )
        if self.frames is not None and len(self.frames) != self.num_frames:
            raise ValidationError(
                f"{self.trial_id}: {len(self.frames)} frames on disk, manifest "
                f"says {self.num_frames}"
            )

    @property
    def timeline(self) -> np.ndarray:
        if self._timeline is None:
            self._timeline = timeline_from_segments(self.segments, self.num_frames)
        return self._timeline


@dataclass(frozen=True)
class Clip:
    """A T-frame window ending at end_frame_index, labeled by its last frame."""

    frames: np.ndarray  # (T, H, W, 3) float32 in [0, 1]
    gaze: np.ndarray  # (T, 2) float32
    label: int
    end_frame_index: int


def window_indices(t: int, window: int) -> np.ndarray:
    """Frame indices [t-window+1 .. t], left-padded by repeating frame 0."""
    return np.maximum(np.arange(t - window + 1, t + 1), 0)


class ClipWindows:
    """Lazy sequence of Clips over a trial's labeled frames (no look-ahead)."""

    def __init__(self, trial: Trial, window: int):
        if window < 1:
            raise ValidationError(f"window length must be >= 1, got {window}")
        if trial.frames is None:
            raise ValidationError(f"{trial.trial_id}: frames not loaded")
        self.trial = trial
        self.window = window
        self.frame_ends = np.flatnonzero(trial.timeline != UNLABELED)

    def __len__(self):
        return len(self.frame_ends)

    def __getitem__(self, i) -> Clip:
        t = int(self.frame_ends[i])
        idx = window_indices(t, self.window)
        frames = self.trial.frames[idx].astype(np.float32) / 255.0
        gaze = self.trial.gaze.points[idx]
        return Clip(frames, gaze, int(self.trial.timeline[t]), t)


def make_windows(trial: Trial, window: int) -> ClipWindows:
    """One clip per labeled frame; window [t-T+1, t] with repeat-frame-0 padding."""
    return ClipWindows(trial, window)


def louo_folds(trials, strict: bool = True, expected_users=None):
    """Leave-one-user-out folds: [(user_id, train_trials, test_trials), ...].

    strict mode requires exactly 8 distinct users. expected_users, when given,
    must all have at least one trial.
    """
    by_user: dict[str, list[Trial]] = {}
    for tr in trials:
        by_user.setdefault(tr.user_id, []).append(tr)
    if expected_users is not None:
        missing = [u for u in expected_users if not by_user.get(u)]
        if missing:
            raise ValidationError(f"users with no trials: {missing}")
    if strict and len(by_user) != 8:
        raise ValidationError(
            f"LOUO expects exactly 8 users, found {len(by_user)} "
            f"({sorted(by_user)}); pass strict=False for other rosters"
        )
    folds = []
    for user in sorted(by_user):
        test = by_user[user]
        train = [tr for tr in trials if tr.user_id != user]
        folds.append((user, train, test))
    return folds


def subsample_trial(trial: Trial, dst_fps: int) -> Trial:
    """Resample a trial (frames, timeline, gaze) to dst_fps, anchored at frame 0."""
    if trial.fps == dst_fps:
        return trial
    keep = subsample_indices(trial.num_frames, trial.fps, dst_fps)
    timeline = trial.timeline[keep]
    gaze = GazeTrack(
        trial.gaze.points[keep].copy(),
        trial.gaze.frame_width,
        trial.gaze.frame_height,
    )
    frames = trial.frames[keep].copy() if trial.frames is not None else None
    return Trial(
        trial_id=trial.trial_id,
        user_id=trial.user_id,
        num_frames=len(keep),
        fps=dst_fps,
        segments=segments_from_timeline(timeline),
        gaze=gaze,
        frames=frames,
    )


class ClipSet:
    """Batched clip access over several trials, for training and evaluation.

    Keeps frames as uint8 and materializes float32 clips per batch. Labels
    are mapped to model class indices via class_ids (gesture id order).
    """

    def __init__(self, trials, window: int, class_ids):
        self.window = window
        self.class_ids = list(class_ids)
        index_of = {gid: k for k, gid in enumerate(self.class_ids)}
        self.trials = list(trials)
        self.entries = []  # (trial_pos, frame_t, class_index)
        for pos, tr in enumerate(self.trials):
            if tr.frames is None:
                raise ValidationError(f"{tr.trial_id}: frames not loaded")
            for t in np.flatnonzero(tr.timeline != UNLABELED):
                gid = int(tr.timeline[t])
                if gid not in index_of:
                    raise ValidationError(
                        f"{tr.trial_id}: label {gesture_name(gid)} not in "
                        f"class list {self.class_ids}"
                    )
                self.entries.append((pos, int(t), index_of[gid]))

    def __len__(self):
        return len(self.entries)

    def gather(self, selection):
        """selection: iterable of entry indices -> (clips, gaze, labels).

        clips: (B, T, H, W, 3) float32 in [0,1]; gaze: (B, T, 2) float32;
        labels: (B,) int64 class indices.
        """
        sel = list(selection)
        bsz = len(sel)
        tr0 = self.trials[self.entries[sel[0]][0]]
        h, w = tr0.frames.shape[1:3]
        clips = np.empty((bsz, self.window, h, w, 3), dtype=np.float32)
        gaze = np.empty((bsz, self.window, 2), dtype=np.float32)
        labels = np.empty(bsz, dtype=np.int64)
        for j, i in enumerate(sel):
            pos, t, cls = self.entries[i]
            tr = self.trials[pos]
            idx = window_indices(t, self.window)
            clips[j] = tr.frames[idx]
            gaze[j] = tr.gaze.points[idx]
            labels[j] = cls
        clips /= 255.0
        return clips, gaze, labels


def write_gaze_csv(path, points) -> None:
    lines = ["frame,x,y\n"]
    for i, (x, y) in enumerate(points):
        lines.append(f"{i},{x:.2f},{y:.2f}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_gaze_csv(path, frame_width: int, frame_height: int) -> GazeTrack:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != "frame,x,y":
        raise ParseError(f"{path}: expected header 'frame,x,y'", line=1)
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"{path}: expected 'frame,x,y' row", lineno)
        try:
            frame, x, y = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"{path}: malformed row {line!r}", lineno) from None
        if frame != len(points):
            raise ParseError(
                f"{path}: expected frame {len(points)}, got {frame}", lineno
            )
        points.append((x, y))
    return GazeTrack(np.array(points, dtype=np.float32), frame_width, frame_height)


def save_trial_dir(trial_dir, frames, segments, gaze_points) -> None:
    """Write one trial's frames, transcription and gaze files."""
    trial_dir = Path(trial_dir)
    trial_dir.mkdir(parents=True, exist_ok=True)
    frames = np.ascontiguousarray(frames, dtype=np.uint8)
    n, h, w, c = frames.shape
    manifest = {
        "num_frames": int(n),
        "height": int(h),
        "width": int(w),
        "channels": int(c),
        "dtype": "uint8",
        "layout": "thwc",
    }
    (trial_dir / FRAMES_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (trial_dir / FRAMES_RAW).write_bytes(frames.tobytes())
    (trial_dir / TRANSCRIPTION).write_text(
        format_transcription(segments), encoding="utf-8"
    )
    write_gaze_csv(trial_dir / GAZE_CSV, gaze_points)


def load_trial_dir(trial_dir, trial_id, user_id, fps, load_frames=True) -> Trial:
    trial_dir = Path(trial_dir)
    manifest = json.loads((trial_dir / FRAMES_MANIFEST).read_text(encoding="utf-8"))
    n = manifest["num_frames"]
    h, w, c = manifest["height"], manifest["width"], manifest["channels"]
    if manifest["dtype"] != "uint8" or manifest.get("layout", "thwc") != "thwc":
        raise ParseError(f"{trial_dir}: unsupported frame encoding {manifest}")
    frames = None
    if load_frames:
        raw = np.fromfile(trial_dir / FRAMES_RAW, dtype=np.uint8)
        if raw.size != n * h * w * c:
            raise ValidationError(
                f"{trial_dir}: frames.raw has {raw.size} bytes, expected "
                f"{n * h * w * c}"
            )
        frames = raw.reshape(n, h, w, c)
    segments = parse_transcription(
        (trial_dir / TRANSCRIPTION).read_text(encoding="utf-8")
    )
    gaze = read_gaze_csv(trial_dir / GAZE_CSV, w, h)
    return Trial(
        trial_id=trial_id,
        user_id=user_id,
        num_frames=n,
        fps=fps,
        segments=segments,
        gaze=gaze,
        frames=frames,
    )


def save_dataset_manifest(root, *, fps, height, width, class_ids, users,
                          trial_records, seed=None) -> None:
    manifest = {
        "format_version": 1,
        "fps": int(fps),
        "height": int(height),
        "width": int(width),
        "classes": [gesture_name(g) for g in class_ids],
        "users": list(users),
        "trials": trial_records,
    }
    if seed is not None:
        manifest["seed"] = int(seed)
    (Path(root) / DATASET_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_dataset(root, load_frames=True):
    """Load a dataset directory -> (trials, manifest dict)."""
    root = Path(root)
    manifest_path = root / DATASET_MANIFEST
    if not manifest_path.exists():
        raise ValidationError(f"no {DATASET_MANIFEST} under {root}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    trials = []
    for rec in manifest["trials"]:
        trials.append(
            load_trial_dir(
                root / "trials" / rec["trial_id"],
                rec["trial_id"],
                rec["user_id"],
                manifest["fps"],
                load_frames=load_frames,
            )
        )
    return trials, manifest
