"""Acceptance suite: seven end-to-end criteria with pinned tolerances.

Each test prints one `ACCEPTANCE <n> ... PASS` line on success (pytest -s to
watch them live). Criteria 5-7 train on the default synthetic dataset and
dominate the suite's runtime; run `pytest -m "not slow"` during development
to skip them.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.signal import correlate2d

from conftest import relative_error
from gazeattn import attention as at
from gazeattn import backbone as bb
from gazeattn import ops
from gazeattn.checkpoint import load_checkpoint
from gazeattn.evaluation import (
    aggregate_louo,
    attention_mass_in_disk,
    edit_score,
    evaluate_fold,
    frame_accuracy,
    levenshtein,
    macro_f1,
)
from gazeattn.gaze import grid_cells
from gazeattn.labels import parse_gesture
from gazeattn.synth import SynthConfig, synth_generate
from gazeattn.training import TrainConfig, train
from gazeattn.trials import ClipSet, load_dataset, louo_folds

DESK_ITERS = 2000
DESK_DECAY_AT = 500
WINDOW = 8
HEATMAP_SIGMA = 1.5


def _report(number, name, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {number} [{name}]: PASS{suffix}")


# ---------------------------------------------------------------- fixtures --

@pytest.fixture(scope="session")
def default_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance") / "dataset"
    synth_generate(out, SynthConfig(seed=7))
    return out


@pytest.fixture(scope="session")
def fold_u1(default_dataset):
    trials, manifest = load_dataset(default_dataset)
    class_ids = [parse_gesture(c) for c in manifest["classes"]]
    user, train_trials, test_trials = louo_folds(trials)[0]
    return {
        "user": user,
        "train": ClipSet(train_trials, WINDOW, class_ids),
        "test": test_trials,
        "class_ids": class_ids,
        "manifest": manifest,
    }


def _desk_train(fold, out_dir, lambda_attn):
    cfg = TrainConfig(
        total_iters=DESK_ITERS,
        lr_decay_at_iter=DESK_DECAY_AT,
        lambda_attn=lambda_attn,
        heatmap_sigma=HEATMAP_SIGMA,
        seed=0,
    )
    model_cfg = bb.BackboneConfig(in_frames=WINDOW)
    started = time.perf_counter()
    ckpt_path, _ = train(fold["train"], cfg, model_cfg, out_dir)
    elapsed = time.perf_counter() - started
    ckpt = load_checkpoint(ckpt_path)
    predict = bb.make_predict_fn(ckpt.params, ckpt.buffers, model_cfg)
    result = evaluate_fold(
        predict, fold["test"], fold["class_ids"], WINDOW, fold["user"]
    )
    return {
        "ckpt": ckpt,
        "model_cfg": model_cfg,
        "result": result,
        "train_seconds": elapsed,
        "path": ckpt_path,
    }


@pytest.fixture(scope="session")
def trained_lambda1(fold_u1, tmp_path_factory):
    return _desk_train(
        fold_u1, tmp_path_factory.mktemp("train_l1"), lambda_attn=1.0
    )


@pytest.fixture(scope="session")
def trained_lambda0(fold_u1, tmp_path_factory):
    return _desk_train(
        fold_u1, tmp_path_factory.mktemp("train_l0"), lambda_attn=0.0
    )


# -------------------------------------------------------------- criterion 1 -

def test_criterion_1_inflation_boring_video():
    started = time.perf_counter()
    rng = np.random.default_rng(100)
    frame = rng.standard_normal((12, 11, 3))
    w1 = rng.standard_normal((5, 3, 3, 3))
    b1 = rng.standard_normal(5)
    w2 = rng.standard_normal((4, 5, 3, 3))
    b2 = rng.standard_normal(4)

    def conv2d_oracle(x, w, b):
        out = np.zeros((x.shape[0], x.shape[1], w.shape[0]))
        for co in range(w.shape[0]):
            acc = np.zeros(x.shape[:2])
            for ci in range(w.shape[1]):
                acc += correlate2d(x[:, :, ci], w[co, ci], mode="same")
            out[:, :, co] = acc + b[co]
        return out

    expected = conv2d_oracle(np.maximum(conv2d_oracle(frame, w1, b1), 0), w2, b2)

    t_len = 6
    video = np.repeat(frame[None, None], t_len, axis=1)
    x, _ = ops.conv3d(video, bb.filters_to_channels_last(bb.inflate_2d(w1, 3)), b1)
    x, _ = ops.relu(x)
    x, _ = ops.conv3d(x, bb.filters_to_channels_last(bb.inflate_2d(w2, 3)), b2)

    worst = max(
        float(np.abs(x[0, t] - expected).max()) for t in range(t_len)
    )
    elapsed = time.perf_counter() - started
    assert worst <= 1e-5, f"max per-frame deviation {worst:.2e}"
    assert elapsed < 10.0
    _report(1, "inflation boring-video equivalence",
            f"max abs err {worst:.2e}, {elapsed:.1f}s")


# -------------------------------------------------------------- criterion 2 -

def test_criterion_2_gradient_fidelity():
    started = time.perf_counter()
    rng = np.random.default_rng(200)
    # (C,T,H,W) <= (3,2,4,4), double precision throughout
    x = rng.standard_normal((1, 2, 4, 4, 3))
    params = at.init_attention_params(
        rng, 3, branch_widths=(3, 3, 2, 2), reduce_widths=(2, 2),
        dtype=np.float64,
    )
    heat = rng.random((1, 2, 4, 4))
    heat /= heat.sum(axis=(-2, -1), keepdims=True)
    probe = rng.standard_normal((1, 2, 4, 4, 3))

    def objective():
        attn, c_attn = at.attention_forward(x, params)
        weighted, c_app = at.apply_attention(x, attn)
        kl, c_kl = at.attention_loss(attn, heat)
        value = kl + float((weighted * probe).mean())
        return value, (c_attn, c_app, c_kl)

    _, (c_attn, c_app, c_kl) = objective()
    dweighted = probe / probe.size
    dx_app, dattn = at.apply_attention_backward(dweighted, c_app)
    dattn = dattn + at.attention_loss_backward(c_kl, 1.0)
    dx_attn, grads = at.attention_backward(dattn, c_attn)
    dx = dx_app + dx_attn

    eps = 1e-6

    def central_difference(arr):
        out = np.zeros_like(arr)
        flat = arr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp, _ = objective()
            flat[i] = orig - eps
            fm, _ = objective()
            flat[i] = orig
            out.ravel()[i] = (fp - fm) / (2 * eps)
        return out

    analytic = [dx.ravel()]
    numeric = [central_difference(x).ravel()]
    for name in sorted(params):
        analytic.append(grads[name].ravel())
        numeric.append(central_difference(params[name]).ravel())
    err = relative_error(np.concatenate(analytic), np.concatenate(numeric))
    elapsed = time.perf_counter() - started
    assert err <= 1e-3, f"relative error {err:.2e}"
    assert elapsed < 60.0
    _report(2, "end-to-end gradient fidelity",
            f"rel err {err:.2e}, {elapsed:.1f}s")


# -------------------------------------------------------------- criterion 3 -

def _lev_oracle(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        _lev_oracle(a[1:], b[1:]) + (a[0] != b[0]),
        _lev_oracle(a, b[1:]) + 1,
        _lev_oracle(a[1:], b) + 1,
    )


def test_criterion_3_metric_oracles():
    started = time.perf_counter()
    rng = np.random.default_rng(300)

    for _ in range(1000):
        a = rng.integers(0, 4, size=rng.integers(0, 9)).tolist()
        b = rng.integers(0, 4, size=rng.integers(0, 9)).tolist()
        assert levenshtein(a, b) == _lev_oracle(a, b)

    for _ in range(500):
        a = rng.integers(0, 4, size=rng.integers(0, 8)).tolist()
        b = rng.integers(0, 4, size=rng.integers(0, 8)).tolist()
        c = rng.integers(0, 4, size=rng.integers(0, 8)).tolist()
        assert levenshtein(a, b) == levenshtein(b, a)
        assert (levenshtein(a, b) == 0) == (a == b)
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)

    # worked examples, exact
    assert frame_accuracy([1, 2, 3], [1, 2, 3]) == 100.0
    assert frame_accuracy([1, 1, 2, 3], [1, 2, 2, 3]) == 75.0
    assert macro_f1([1, 2, 2], [1, 2, 2]) == 100.0
    gt = [1] * 20 + [2] * 20
    pred = [1] * 12 + [2] * 3 + [3] * 5 + [2] * 12 + [1] * 3 + [3] * 5
    assert round(macro_f1(pred, gt), 2) == 68.57
    assert macro_f1([1] * 4 + [2, 2] + [3] * 4, [1] * 4 + [2] * 6) == 75.0
    assert edit_score([1, 1, 2, 3], [1, 1, 2, 3]) == 100.0
    two_thirds = edit_score([1, 1, 3, 3, 3], [1, 1, 2, 2, 3])
    assert two_thirds == pytest.approx(100 * 2 / 3, abs=1e-9)
    agg = aggregate_louo([{"accuracy": 80.0}, {"accuracy": 90.0}])
    assert agg["accuracy"]["mean"] == 85.0
    assert agg["accuracy"]["std"] == pytest.approx(7.0710678, abs=1e-6)

    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    _report(3, "metric oracles", f"{elapsed:.1f}s")


# -------------------------------------------------------------- criterion 4 -

def test_criterion_4_attention_invariants():
    started = time.perf_counter()
    rng = np.random.default_rng(400)
    degenerate = 0
    for _ in range(200):
        t = int(rng.integers(1, 4))
        h = int(rng.integers(2, 6))
        w = int(rng.integers(2, 6))
        c = int(rng.integers(2, 5))
        scale = float(rng.uniform(0.05, 20.0))
        x = rng.standard_normal((1, t, h, w, c)) * scale
        params = at.init_attention_params(
            rng, c, branch_widths=(3, 3, 2, 2), reduce_widths=(2, 2),
            dtype=np.float64,
        )
        attn, _ = at.attention_forward(x, params)
        assert attn.shape == (1, t, h, w)
        assert np.isfinite(attn).all()
        assert attn.min() >= 0.0 and attn.max() <= 1.0
        if attn.max() > 0:
            assert attn.max() == 1.0 and attn.min() == 0.0
        else:
            degenerate += 1
        weighted, _ = at.apply_attention(x, attn)
        assert weighted.shape == x.shape
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    _report(
        4, "attention range/shape invariants",
        f"200 draws, {degenerate} degenerate, {elapsed:.1f}s",
    )


# -------------------------------------------------------------- criterion 5 -

@pytest.mark.slow
def test_criterion_5_synthetic_end_to_end(trained_lambda1):
    result = trained_lambda1["result"]
    elapsed = trained_lambda1["train_seconds"]
    assert elapsed <= 30 * 60, f"training took {elapsed / 60:.1f} min"
    assert result.accuracy >= 80.0, (
        f"held-out accuracy {result.accuracy:.2f}% < 80% "
        f"(per-trial: {[round(m['accuracy'], 1) for m in result.per_trial]})"
    )
    _report(
        5, "synthetic end-to-end",
        f"fold {result.user_id}: accuracy {result.accuracy:.2f}%, "
        f"f1 {result.f1:.2f}%, edit {result.edit:.2f}%, "
        f"train {elapsed / 60:.1f} min",
    )


@pytest.mark.slow
@pytest.mark.skipif(
    not os.environ.get("GAZEATTN_FULL_LOUO"),
    reason="full 8-fold LOUO run is optional (hours); set GAZEATTN_FULL_LOUO=1",
)
def test_criterion_5_optional_full_louo(default_dataset, tmp_path_factory):
    trials, manifest = load_dataset(default_dataset)
    class_ids = [parse_gesture(c) for c in manifest["classes"]]
    fold_metrics = []
    for user, train_trials, test_trials in louo_folds(trials):
        out = tmp_path_factory.mktemp(f"louo_{user}")
        clipset = ClipSet(train_trials, WINDOW, class_ids)
        cfg = TrainConfig(
            total_iters=DESK_ITERS, lr_decay_at_iter=DESK_DECAY_AT, seed=0
        )
        ckpt_path, _ = train(clipset, cfg, bb.BackboneConfig(in_frames=WINDOW), out)
        ckpt = load_checkpoint(ckpt_path)
        predict = bb.make_predict_fn(
            ckpt.params, ckpt.buffers, bb.BackboneConfig(in_frames=WINDOW)
        )
        result = evaluate_fold(predict, test_trials, class_ids, WINDOW, user)
        fold_metrics.append(result.metrics())
    aggregate = aggregate_louo(fold_metrics)
    assert aggregate["accuracy"]["std"] is not None
    _report(5, "optional full LOUO", str(aggregate))


# -------------------------------------------------------------- criterion 6 -

def _gaze_disk_mass(model, fold, max_clips=256):
    cfg = model["model_cfg"]
    ckpt = model["ckpt"]
    t_attn, h_attn, w_attn = bb.attention_map_dims(cfg)
    clipset = ClipSet(fold["test"], WINDOW, fold["class_ids"])
    step = max(len(clipset) // max_clips, 1)
    selection = list(range(0, len(clipset), step))[:max_clips]
    masses = []
    for start in range(0, len(selection), 64):
        sel = selection[start : start + 64]
        clips, gaze, _ = clipset.gather(sel)
        _, attn, _ = bb.forward(ckpt.params, ckpt.buffers, clips, cfg,
                                train=False)
        cells = grid_cells(
            gaze, cfg.in_width, cfg.in_height, w_attn, h_attn, attn_len=t_attn
        )
        masses.append(
            attention_mass_in_disk(attn, cells, radius=2 * HEATMAP_SIGMA)
        )
    return float(np.mean(masses))


@pytest.mark.slow
def test_criterion_6_gaze_guidance_ablation(
    trained_lambda1, trained_lambda0, fold_u1
):
    mass1 = _gaze_disk_mass(trained_lambda1, fold_u1)
    mass0 = _gaze_disk_mass(trained_lambda0, fold_u1)
    acc1 = trained_lambda1["result"].accuracy
    acc0 = trained_lambda0["result"].accuracy
    assert mass1 > mass0, f"supervised mass {mass1:.3f} <= baseline {mass0:.3f}"
    ratio = mass1 / max(mass0, 1e-9)
    assert ratio >= 1.2, f"mass ratio {ratio:.2f} < 1.2"
    assert acc1 >= acc0 - 2.0, (
        f"supervised accuracy {acc1:.2f}% more than 2 points below "
        f"baseline {acc0:.2f}%"
    )
    _report(
        6, "gaze-guidance ablation",
        f"mass {mass1:.3f} vs {mass0:.3f} (ratio {ratio:.2f}), "
        f"accuracy {acc1:.2f}% vs {acc0:.2f}%",
    )


# -------------------------------------------------------------- criterion 7 -

def _tree_bytes(root):
    root = Path(root)
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.mark.slow
def test_criterion_7_determinism(default_dataset, fold_u1, tmp_path_factory):
    started = time.perf_counter()
    base = tmp_path_factory.mktemp("determinism")
    synth_generate(base / "a", SynthConfig(seed=7))
    synth_generate(base / "b", SynthConfig(seed=7))
    assert _tree_bytes(base / "a") == _tree_bytes(base / "b")
    reference = _tree_bytes(default_dataset)
    assert _tree_bytes(base / "a") == reference

    # training determinism: a shortened run exercises the full loop
    # (shuffling, flips, dropout, batchnorm, checkpointing); two full-length
    # runs would not fit inside this criterion's runtime bound
    cfg = TrainConfig(total_iters=40, lr_decay_at_iter=DESK_DECAY_AT, seed=0)
    model_cfg = bb.BackboneConfig(in_frames=WINDOW)
    p1, _ = train(fold_u1["train"], cfg, model_cfg, base / "run_a")
    p2, _ = train(fold_u1["train"], cfg, model_cfg, base / "run_b")
    assert p1.read_bytes() == p2.read_bytes()
    elapsed = time.perf_counter() - started
    assert elapsed <= 30 * 60
    _report(
        7, "determinism",
        f"dataset trees and 40-iter checkpoints byte-identical, "
        f"{elapsed / 60:.1f} min",
    )
