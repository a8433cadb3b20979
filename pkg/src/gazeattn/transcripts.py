"""Transcription parsing and per-frame label timelines.

A transcription file is UTF-8 text, one segment per non-empty line:

    <start_frame> <end_frame> Gk

with inclusive, zero-based frame bounds. Segments must be non-overlapping;
frames not covered by any segment are UNLABELED in the timeline.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .labels import UNLABELED, gesture_name, parse_gesture


@dataclass(frozen=True)
class Segment:
    start_frame: int
    end_frame: int
    label: int

    def __post_init__(self):
        if self.start_frame < 0:
            raise ValidationError(f"segment start {self.start_frame} < 0")
        if self.end_frame < self.start_frame:
            raise ValidationError(
                f"segment end {self.end_frame} < start {self.start_frame}"
            )


def parse_transcription(text: str) -> list[Segment]:
    """Parse transcription file contents into sorted, non-overlapping segments."""
    segments = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(
                f"expected 'start end Gk', got {line!r}", lineno
            )
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(
                f"non-integer frame bounds in {line!r}", lineno
            ) from None
        if end < start:
            raise ParseError(f"end {end} < start {start}", lineno)
        label = parse_gesture(parts[2], lineno)
        segments.append(Segment(start, end, label))
    segments.sort(key=lambda s: s.start_frame)
    for prev, cur in zip(segments, segments[1:]):
        if cur.start_frame <= prev.end_frame:
            raise ValidationError(
                f"segments overlap: [{prev.start_frame},{prev.end_frame}] and "
                f"[{cur.start_frame},{cur.end_frame}]"
            )
    return segments


def format_transcription(segments) -> str:
    return "".join(
        f"{s.start_frame} {s.end_frame} {gesture_name(s.label)}\n"
        for s in segments
    )


def timeline_from_segments(segments, num_frames: int) -> np.ndarray:
    """Expand segments into a per-frame label array of length num_frames."""
    timeline = np.full(num_frames, UNLABELED, dtype=np.int16)
    for seg in segments:
        if seg.end_frame >= num_frames:
            raise ValidationError(
                f"segment [{seg.start_frame},{seg.end_frame}] exceeds "
                f"num_frames={num_frames}"
            )
        timeline[seg.start_frame : seg.end_frame + 1] = seg.label
    return timeline


def segments_from_timeline(timeline) -> list[Segment]:
    """Run-length encode a timeline back into segments, skipping UNLABELED runs."""
    segments = []
    start = None
    current = UNLABELED
    for i, label in enumerate(timeline):
        if label != current:
            if current != UNLABELED:
                segments.append(Segment(start, i - 1, int(current)))
            start, current = i, label
    if current != UNLABELED:
        segments.append(Segment(start, len(timeline) - 1, int(current)))
    return segments


def subsample_indices(num_frames: int, src_fps: int, dst_fps: int) -> np.ndarray:
    """Frame indices kept when resampling src_fps -> dst_fps (anchor frame 0)."""
    if src_fps <= 0 or dst_fps <= 0:
        raise ConfigError("frame rates must be positive")
    if src_fps % dst_fps != 0:
        raise ConfigError(
            f"src_fps={src_fps} not divisible by dst_fps={dst_fps}"
        )
    return np.arange(0, num_frames, src_fps // dst_fps)


def subsample_timeline(timeline, gaze_points, src_fps: int, dst_fps: int):
    """Subsample a label timeline and its gaze track with one shared stride.

    timeline: (N,) labels; gaze_points: (N,2) pixel coordinates.
    """
    timeline = np.asarray(timeline)
    gaze_points = np.asarray(gaze_points)
    if len(timeline) != len(gaze_points):
        raise ValidationError(
            f"timeline has {len(timeline)} frames but gaze has {len(gaze_points)}"
        )
    keep = subsample_indices(len(timeline), src_fps, dst_fps)
    return timeline[keep], gaze_points[keep]
