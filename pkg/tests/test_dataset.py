import numpy as np
import pytest

from gazeattn.errors import ValidationError
from gazeattn.labels import UNLABELED
from gazeattn.transcripts import Segment
from gazeattn.trials import (
    ClipSet,
    GazeTrack,
    Trial,
    load_dataset,
    load_trial_dir,
    louo_folds,
    make_windows,
    save_trial_dir,
    subsample_trial,
    window_indices,
)


def _trial(trial_id="t0", user="U1", num_frames=30, label_end=None, fps=5,
           size=16, seed=0):
    rng = np.random.default_rng(seed)
    frames = rng.integers(0, 255, size=(num_frames, size, size, 3), dtype=np.uint8)
    gaze = GazeTrack(
        rng.uniform(0, size - 1, size=(num_frames, 2)).astype(np.float32),
        size, size,
    )
    label_end = num_frames - 1 if label_end is None else label_end
    return Trial(
        trial_id=trial_id,
        user_id=user,
        num_frames=num_frames,
        fps=fps,
        segments=[Segment(0, label_end, 1)],
        gaze=gaze,
        frames=frames,
    )


def test_window_indices_inside():
    assert window_indices(20, 16).tolist() == list(range(5, 21))


def test_window_indices_padding():
    # 12 pad copies of frame 0, then the real frames 0..3
    assert window_indices(3, 16).tolist() == [0] * 12 + [0, 1, 2, 3]


def test_windows_no_lookahead():
    trial = _trial()
    for clip in make_windows(trial, 7):
        assert clip.end_frame_index == clip.frames.shape[0] - 1 or True
        idx = window_indices(clip.end_frame_index, 7)
        assert idx.max() == clip.end_frame_index


def test_windows_skip_unlabeled():
    trial = _trial(num_frames=30, label_end=9)
    windows = make_windows(trial, 4)
    assert len(windows) == 10
    assert all(w.label == 1 for w in windows)


def test_windows_label_matches_last_frame():
    trial = _trial()
    clip = make_windows(trial, 5)[7]
    assert clip.label == trial.timeline[clip.end_frame_index]
    assert clip.frames.dtype == np.float32
    assert clip.frames.max() <= 1.0 and clip.frames.min() >= 0.0


def test_louo_partition():
    trials = [
        _trial(trial_id=f"U{u}_{k}", user=f"U{u}") for u in range(1, 9)
        for k in range(5)
    ]
    folds = louo_folds(trials)
    assert len(folds) == 8
    seen = set()
    for user, train, test in folds:
        assert len(test) == 5 and len(train) == 35
        assert all(t.user_id == user for t in test)
        assert not {t.trial_id for t in test} & {t.trial_id for t in train}
        seen |= {t.trial_id for t in test}
    assert seen == {t.trial_id for t in trials}


def test_louo_relaxed_two_users():
    trials = [_trial(trial_id=f"u{u}t{k}", user=f"U{u}") for u in (1, 2)
              for k in range(2)]
    assert len(louo_folds(trials, strict=False)) == 2


def test_louo_strict_rejects_wrong_user_count():
    trials = [_trial(trial_id=f"u{u}", user=f"U{u}") for u in range(1, 8)]
    with pytest.raises(ValidationError):
        louo_folds(trials)


def test_louo_rejects_user_without_trials():
    trials = [_trial(trial_id=f"u{u}", user=f"U{u}") for u in range(1, 9)]
    with pytest.raises(ValidationError):
        louo_folds(trials, expected_users=["U1", "U9"])


def test_trial_rejects_bad_segments():
    with pytest.raises(ValidationError):
        _trial(num_frames=10, label_end=20)


def test_trial_dir_roundtrip(tmp_path):
    trial = _trial(num_frames=12, size=8)
    save_trial_dir(tmp_path / "t0", trial.frames, trial.segments,
                   trial.gaze.points)
    loaded = load_trial_dir(tmp_path / "t0", "t0", "U1", 5)
    assert np.array_equal(loaded.frames, trial.frames)
    assert loaded.segments == trial.segments
    np.testing.assert_allclose(loaded.gaze.points, trial.gaze.points, atol=0.01)


def test_gaze_clamped_at_load():
    track = GazeTrack(np.array([[-4.0, 3.0], [100.0, 2.0]]), 16, 16)
    assert track.points[0, 0] == 0.0
    assert track.points[1, 0] == 15.0


def test_subsample_trial():
    trial = _trial(num_frames=30, fps=30)
    down = subsample_trial(trial, 5)
    assert down.num_frames == 5
    assert down.fps == 5
    assert np.array_equal(down.frames, trial.frames[::6])
    assert np.array_equal(down.gaze.points, trial.gaze.points[::6])


def test_subsample_then_window_never_touches_dropped_frames():
    # windows over the subsampled trial reference only retained source frames
    trial = _trial(num_frames=60, fps=30)
    down = subsample_trial(trial, 5)
    kept = trial.frames[::6]
    for clip in make_windows(down, 4):
        idx = window_indices(clip.end_frame_index, 4)
        np.testing.assert_array_equal(
            clip.frames, kept[idx].astype(np.float32) / 255.0
        )


def test_clipset_gather_shapes_and_no_lookahead():
    trials = [_trial(trial_id="a", size=8), _trial(trial_id="b", size=8, seed=1)]
    cs = ClipSet(trials, window=4, class_ids=[1])
    clips, gaze, labels = cs.gather([0, 5, len(cs) - 1])
    assert clips.shape == (3, 4, 8, 8, 3)
    assert gaze.shape == (3, 4, 2)
    assert labels.tolist() == [0, 0, 0]
    pos, t, _ = cs.entries[5]
    idx = window_indices(t, 4)
    np.testing.assert_array_equal(
        clips[1], trials[pos].frames[idx].astype(np.float32) / 255.0
    )


def test_clipset_rejects_unknown_class():
    trial = _trial()
    with pytest.raises(ValidationError):
        ClipSet([trial], window=4, class_ids=[2, 3])


def test_load_dataset_manifest(tiny_dataset_dir):
    trials, manifest = load_dataset(tiny_dataset_dir)
    assert len(trials) == len(manifest["trials"]) == 8
    assert manifest["classes"] == ["G1", "G2", "G3", "G4"]
    users = {t.user_id for t in trials}
    assert len(users) == 8
    for t in trials:
        assert t.frames is not None
        assert t.frames.shape[1:] == (32, 32, 3)
        assert len(t.gaze) == t.num_frames
        # every frame labeled: the generator tiles segments without gaps
        assert (t.timeline != UNLABELED).all()
