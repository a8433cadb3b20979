"""Frame accuracy, macro F1, Levenshtein edit score and LOUO aggregation.

All metrics are percentages in [0,100]. Frames whose ground truth is
UNLABELED are excluded everywhere: from accuracy denominators, from
per-class tallies, and (as runs) from the segment sequences that the edit
score compares.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetricError, ValidationError
from .labels import UNLABELED
from .trials import ClipSet

_EVAL_BATCH = 64


def _check_lengths(pred, gt):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValidationError(
            f"prediction length {pred.shape} != ground truth {gt.shape}"
        )
    return pred, gt


def frame_accuracy(pred, gt) -> float:
    """Percent of correctly labeled frames among gt-labeled frames."""
    pred, gt = _check_lengths(pred, gt)
    labeled = gt != UNLABELED
    n = int(labeled.sum())
    if n == 0:
        raise UndefinedMetricError("no labeled frames: accuracy undefined")
    return 100.0 * float((pred[labeled] == gt[labeled]).sum()) / n


def macro_f1(pred, gt) -> float:
    """Macro-averaged F1 over the classes present in the ground truth."""
    pred, gt = _check_lengths(pred, gt)
    labeled = gt != UNLABELED
    if not labeled.any():
        raise UndefinedMetricError("no labeled frames: F1 undefined")
    pred = pred[labeled]
    gt = gt[labeled]
    scores = []
    for cls in np.unique(gt):
        tp = float(((pred == cls) & (gt == cls)).sum())
        fp = float(((pred == cls) & (gt != cls)).sum())
        fn = float(((pred != cls) & (gt == cls)).sum())
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        if precision + recall == 0.0:
            scores.append(0.0)
        else:
            scores.append(2 * precision * recall / (precision + recall))
    return 100.0 * float(np.mean(scores))


def rle_segments(timeline) -> list[int]:
    """Collapse maximal runs to their labels, dropping UNLABELED runs."""
    out = []
    prev = None
    for label in np.asarray(timeline):
        label = int(label)
        if label != prev:
            if label != UNLABELED:
                out.append(label)
            prev = label
    return out


def levenshtein(a, b) -> int:
    """Unit-cost edit distance between two label sequences."""
    a = list(a)
    b = list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ai in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, bj in enumerate(b, start=1):
            cost = 0 if ai == bj else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[len(b)]


def edit_score(pred_timeline, gt_timeline) -> float:
    """100 * (1 - lev(rle(pred), rle(gt)) / max(len, len, 1)), in [0,100]."""
    p = rle_segments(pred_timeline)
    y = rle_segments(gt_timeline)
    denom = max(len(p), len(y), 1)
    score = 100.0 * (1.0 - levenshtein(p, y) / denom)
    return float(np.clip(score, 0.0, 100.0))


@dataclass
class FoldResult:
    user_id: str
    trial_ids: list = field(default_factory=list)
    pred_timelines: list = field(default_factory=list)
    gt_timelines: list = field(default_factory=list)
    per_trial: list = field(default_factory=list)  # dicts of metric -> value
    accuracy: float = 0.0
    f1: float = 0.0
    edit: float = 0.0

    def metrics(self) -> dict:
        return {"accuracy": self.accuracy, "f1": self.f1, "edit": self.edit}


def predict_timeline(predict_fn, trial, class_ids, window: int) -> np.ndarray:
    """Per-frame predictions for one trial (UNLABELED where gt is unlabeled).

    For every gt-labeled frame t, the window ending at t is classified and
    the argmax class recorded; no future frame is read.
    """
    clipset = ClipSet([trial], window, class_ids)
    pred = np.full(trial.num_frames, UNLABELED, dtype=np.int16)
    for start in range(0, len(clipset), _EVAL_BATCH):
        sel = range(start, min(start + _EVAL_BATCH, len(clipset)))
        clips, _, _ = clipset.gather(sel)
        logits = predict_fn(clips)
        choices = np.argmax(logits, axis=1)
        for j, i in enumerate(sel):
            _, t, _ = clipset.entries[i]
            pred[t] = class_ids[int(choices[j])]
    return pred


def evaluate_fold(predict_fn, test_trials, class_ids, window: int,
                  user_id: str = "") -> FoldResult:
    """Predict every labeled frame of each test trial and score per trial.

    Fold metrics are the unweighted mean of per-trial metrics.
    """
    if not test_trials:
        raise ValidationError("evaluate_fold needs at least one trial")
    result = FoldResult(user_id=user_id)
    for trial in test_trials:
        pred = predict_timeline(predict_fn, trial, class_ids, window)
        gt = trial.timeline
        metrics = {
            "accuracy": frame_accuracy(pred, gt),
            "f1": macro_f1(pred, gt),
            "edit": edit_score(pred, gt),
        }
        result.trial_ids.append(trial.trial_id)
        result.pred_timelines.append(pred)
        result.gt_timelines.append(gt.copy())
        result.per_trial.append(metrics)
    for key in ("accuracy", "f1", "edit"):
        setattr(result, key, float(np.mean([m[key] for m in result.per_trial])))
    return result


def aggregate_louo(fold_metrics) -> dict:
    """Unweighted mean and sample std (ddof=1) of each metric across folds.

    fold_metrics: list of {metric: value} dicts. With a single fold the std
    is undefined and reported as None.
    """
    if not fold_metrics:
        raise ValidationError("aggregate_louo needs at least one fold")
    keys = fold_metrics[0].keys()
    out = {}
    for key in keys:
        values = np.array([m[key] for m in fold_metrics], dtype=np.float64)
        mean = float(values.mean())
        std = float(values.std(ddof=1)) if len(values) >= 2 else None
        out[key] = {"mean": mean, "std": std}
    return out


def attention_mass_in_disk(attn, cells, radius: float) -> float:
    """Mean attention mass within a disk around the gaze cell.

    attn: (B,T',h,w) attention maps; cells: (B,T',2) gaze (col,row) cells;
    radius in cells. Each map is normalized to unit mass first, so the
    result is comparable across models.
    """
    attn = np.asarray(attn, dtype=np.float64)
    b, t, h, w = attn.shape
    shifted = attn + 1e-12
    shifted /= shifted.sum(axis=(-2, -1), keepdims=True)
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    cx = cells[..., 0][..., None, None]
    cy = cells[..., 1][..., None, None]
    disk = (rows - cy) ** 2 + (cols - cx) ** 2 <= radius**2
    return float((shifted * disk).sum(axis=(-2, -1)).mean())
