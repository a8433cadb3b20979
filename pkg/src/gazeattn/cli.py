"""Command-line interface: synth, train, eval.

All commands are batch-style: progress goes to stderr, results to files.
Every run writes its fully resolved configuration (defaults, then config
file, then flags) as run_config.txt next to its outputs, so a run can be
reproduced from that file alone.

Exit codes: 0 success, 2 usage error, 3 validation/config error, 4 runtime
failure.

Config file format: flat 'key = value' lines, '#' comments; keys equal the
long flag names with dashes replaced by underscores.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import backend
from .backbone import BackboneConfig, attention_map_dims, forward, make_predict_fn
from .checkpoint import load_checkpoint
from .errors import (
    ConfigError,
    GazeAttnError,
    TrainingDivergedError,
    ValidationError,
)
from .evaluation import aggregate_louo, evaluate_fold
from .gaze import heatmap_volume
from .labels import UNLABELED, gesture_name, parse_gesture
from .synth import SynthConfig, synth_generate
from .trials import ClipSet, load_dataset, louo_folds, subsample_trial, window_indices
from .training import CHECKPOINT_NAME, TrainConfig, train

EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


def _read_config_file(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(text: str, like):
    if isinstance(like, bool):
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def _resolve(args, defaults: dict) -> dict:
    """defaults <- config file <- explicit flags; returns the final mapping."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config)
    resolved = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in file_values:
            resolved[key] = _coerce(file_values[key], default)
        else:
            resolved[key] = default
    unknown = set(file_values) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return resolved


def _write_run_config(out_dir, resolved: dict, meta: dict | None = None) -> None:
    """Persist the resolved config; re-runnable via --config run_config.txt.

    meta entries (paths, backend) are provenance, not config keys, and are
    written as comments so the file round-trips through _resolve.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"# {key} = {value}\n" for key, value in sorted((meta or {}).items())]
    lines += [f"{key} = {value}\n" for key, value in sorted(resolved.items())]
    (out_dir / "run_config.txt").write_text("".join(lines), encoding="utf-8")


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


# ----------------------------------------------------------------- synth ---

_SYNTH_DEFAULTS = {f.name: getattr(SynthConfig(), f.name) for f in fields(SynthConfig)}


def cmd_synth(args) -> int:
    resolved = _resolve(args, _SYNTH_DEFAULTS)
    cfg = SynthConfig(**resolved)
    _write_run_config(args.out, resolved, meta={"out": args.out})
    summary = synth_generate(args.out, cfg)
    _progress(
        f"wrote {summary['num_trials']} trials, {summary['num_frames']} frames "
        f"to {args.out}"
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# ----------------------------------------------------------------- train ---

_TRAIN_DEFAULTS = {
    f.name: getattr(TrainConfig(), f.name) for f in fields(TrainConfig)
}
_TRAIN_DEFAULTS.update(
    {
        "window": 8,
        "fps": 5,
        "attention_stage": 2,
        "dropout": 0.5,
        "scale_per_timestamp": False,
        "no_attention": False,
        "relaxed_folds": False,
        "fold": "all",
        "log_every": 100,
    }
)


def _load_trials_at_fps(data_dir, fps):
    trials, manifest = load_dataset(data_dir)
    if manifest["fps"] % fps != 0:
        raise ConfigError(
            f"dataset fps {manifest['fps']} not divisible by requested {fps}"
        )
    if manifest["fps"] != fps:
        trials = [subsample_trial(t, fps) for t in trials]
    class_ids = [parse_gesture(name) for name in manifest["classes"]]
    return trials, manifest, class_ids


def _select_folds(trials, fold: str, relaxed: bool):
    folds = louo_folds(trials, strict=not relaxed)
    if fold == "all":
        return folds
    chosen = [f for f in folds if f[0] == fold]
    if not chosen:
        raise ValidationError(
            f"no fold for user {fold!r}; users: {[f[0] for f in folds]}"
        )
    return chosen


def cmd_train(args) -> int:
    resolved = _resolve(args, _TRAIN_DEFAULTS)
    if resolved["no_attention"]:
        resolved["lambda_attn"] = 0.0
    trials, manifest, class_ids = _load_trials_at_fps(args.data, resolved["fps"])
    model_cfg = BackboneConfig(
        in_frames=resolved["window"],
        in_height=manifest["height"],
        in_width=manifest["width"],
        num_classes=len(class_ids),
        attention_stage=resolved["attention_stage"],
        scale_per_timestamp=resolved["scale_per_timestamp"],
        dropout=resolved["dropout"],
    )
    train_cfg = TrainConfig(
        **{f.name: resolved[f.name] for f in fields(TrainConfig)}
    )
    out_root = Path(args.out)
    _write_run_config(
        out_root, resolved,
        meta={"data": args.data, "out": args.out,
              "backend": backend.active_backend()},
    )
    log_every = max(int(resolved["log_every"]), 1)
    for user, train_trials, _ in _select_folds(
        trials, resolved["fold"], resolved["relaxed_folds"]
    ):
        fold_dir = out_root / f"fold_{user}"
        clipset = ClipSet(train_trials, resolved["window"], class_ids)
        _progress(
            f"fold {user}: {len(clipset)} training clips, "
            f"{train_cfg.total_iters} iters, backend={backend.active_backend()}"
        )

        def report(it, row, _user=user):
            if (it + 1) % log_every == 0:
                _progress(
                    f"fold {_user} iter {it + 1}/{train_cfg.total_iters} "
                    f"lr={row['lr']:.4g} ce={row['ce_loss']:.4f} "
                    f"attn={row['attn_loss']:.4f}"
                )

        ckpt_path, rows = train(
            clipset, train_cfg, model_cfg, fold_dir,
            extra_config={"fold": user, "data_dir": str(args.data)},
            progress=report,
        )
        _progress(f"fold {user}: checkpoint -> {ckpt_path}")
    return 0


# ------------------------------------------------------------------ eval ---

_EVAL_DEFAULTS = {
    "window": None,  # from checkpoint
    "fps": 5,
    "fold": None,  # from checkpoint
    "batch_size": 64,
    "plot_timeline": False,
    "plot_attn": False,
    "relaxed_folds": False,
}


def _checkpoints_for_eval(args):
    if bool(args.checkpoint) == bool(args.run_dir):
        raise ConfigError("pass exactly one of --checkpoint or --run-dir")
    if args.checkpoint:
        return [Path(args.checkpoint)]
    run_dir = Path(args.run_dir)
    paths = sorted(run_dir.glob(f"fold_*/{CHECKPOINT_NAME}"))
    if not paths:
        raise ValidationError(f"no fold_*/{CHECKPOINT_NAME} under {run_dir}")
    return paths


def _eval_one_checkpoint(ckpt_path, trials, class_ids, resolved, out_dir):
    ckpt = load_checkpoint(ckpt_path)
    model_cfg = BackboneConfig.from_dict(ckpt.config["backbone"])
    window = resolved["window"] or ckpt.config.get("window", model_cfg.in_frames)
    fold_user = resolved["fold"] or ckpt.config.get("fold")
    if not fold_user:
        raise ConfigError(
            f"{ckpt_path}: checkpoint lacks fold metadata; pass --fold"
        )
    folds = _select_folds(trials, fold_user, resolved["relaxed_folds"])
    _, _, test_trials = folds[0]
    predict = make_predict_fn(
        ckpt.params, ckpt.buffers, model_cfg, resolved["batch_size"]
    )
    result = evaluate_fold(predict, test_trials, class_ids, window, fold_user)
    _write_timelines(out_dir / "timelines", result)
    if resolved["plot_timeline"]:
        from .plots import plot_timeline

        plot_dir = out_dir / "plots"
        plot_dir.mkdir(parents=True, exist_ok=True)
        for tid, gt, pred in zip(
            result.trial_ids, result.gt_timelines, result.pred_timelines
        ):
            plot_timeline(
                gt, pred, plot_dir / f"timeline_{tid}.png", title=tid
            )
    if resolved["plot_attn"]:
        _plot_attention(
            out_dir / "plots", ckpt, model_cfg, test_trials, window
        )
    return result


def _write_timelines(timeline_dir, result) -> None:
    timeline_dir = Path(timeline_dir)
    timeline_dir.mkdir(parents=True, exist_ok=True)
    for tid, gt, pred in zip(
        result.trial_ids, result.gt_timelines, result.pred_timelines
    ):
        lines = ["frame,gt,pred\n"]
        for f, (g, p) in enumerate(zip(gt, pred)):
            lines.append(f"{f},{gesture_name(int(g))},{gesture_name(int(p))}\n")
        (timeline_dir / f"{tid}.csv").write_text("".join(lines), encoding="utf-8")


def _plot_attention(plot_dir, ckpt, model_cfg, test_trials, window) -> None:
    from .plots import plot_attention_overlay

    plot_dir = Path(plot_dir)
    plot_dir.mkdir(parents=True, exist_ok=True)
    attn_t, attn_h, attn_w = attention_map_dims(model_cfg)
    for trial in test_trials:
        labeled = np.flatnonzero(trial.timeline != UNLABELED)
        if len(labeled) == 0:
            continue
        t = int(labeled[len(labeled) // 2])
        idx = window_indices(t, window)
        clip = trial.frames[idx].astype(np.float32) / 255.0
        gaze = trial.gaze.points[idx]
        _, attn, _ = forward(
            ckpt.params, ckpt.buffers, clip[None], model_cfg, train=False
        )
        heat = heatmap_volume(
            gaze, model_cfg.in_width, model_cfg.in_height, attn_w, attn_h,
            attn_len=attn_t,
        )
        plot_attention_overlay(
            clip, attn[0], gaze, heat,
            plot_dir / f"attention_{trial.trial_id}.png",
            title=f"{trial.trial_id} (window ending at frame {t})",
        )


def cmd_eval(args) -> int:
    resolved = _resolve(args, _EVAL_DEFAULTS)
    out_dir = Path(args.out)
    trials, manifest, class_ids = _load_trials_at_fps(args.data, resolved["fps"])
    ckpt_paths = _checkpoints_for_eval(args)
    _write_run_config(
        out_dir, resolved,
        meta={"data": args.data, "out": args.out,
              "checkpoints": ",".join(str(p) for p in ckpt_paths),
              "backend": backend.active_backend()},
    )
    fold_results = []
    for path in ckpt_paths:
        result = _eval_one_checkpoint(path, trials, class_ids, resolved, out_dir)
        _progress(
            f"fold {result.user_id}: accuracy {result.accuracy:.2f} "
            f"f1 {result.f1:.2f} edit {result.edit:.2f}"
        )
        fold_results.append(result)
    report = {
        "folds": [
            {
                "fold": r.user_id,
                "accuracy": r.accuracy,
                "f1": r.f1,
                "edit": r.edit,
                "trials": [
                    {"trial_id": tid, **metrics}
                    for tid, metrics in zip(r.trial_ids, r.per_trial)
                ],
            }
            for r in fold_results
        ],
        "aggregate": aggregate_louo([r.metrics() for r in fold_results]),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(json.dumps(report["aggregate"], indent=2, sort_keys=True))
    return 0


# ----------------------------------------------------------------- parser ---


def _add_synth_parser(sub):
    p = sub.add_parser("synth", help="generate the synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--num-users", dest="num_users", type=int)
    p.add_argument("--trials-per-user", dest="trials_per_user", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--num-classes", dest="num_classes", type=int)
    p.add_argument("--fps", type=int)
    p.add_argument("--min-segments", dest="min_segments", type=int)
    p.add_argument("--max-segments", dest="max_segments", type=int)
    p.add_argument("--min-segment-frames", dest="min_segment_frames", type=int)
    p.add_argument("--max-segment-frames", dest="max_segment_frames", type=int)
    p.add_argument("--gaze-noise", dest="gaze_noise", type=float)
    p.add_argument("--blob-sigma", dest="blob_sigma", type=float)
    p.set_defaults(func=cmd_synth)


def _add_train_parser(sub):
    p = sub.add_parser("train", help="train one LOUO fold (or all)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--fold", help="user id to leave out, or 'all'")
    p.add_argument("--window", type=int, help="clip length T")
    p.add_argument("--fps", type=int)
    p.add_argument("--iters", dest="total_iters", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--lr-decay-factor", dest="lr_decay_factor", type=float)
    p.add_argument("--lr-decay-at", dest="lr_decay_at_iter", type=int)
    p.add_argument(
        "--lr-step-every", dest="lr_step_every", action="store_true",
        default=None, help="decay every lr-decay-at iterations",
    )
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--lambda-attn", dest="lambda_attn", type=float)
    p.add_argument(
        "--no-attention", dest="no_attention", action="store_true",
        default=None, help="disable gaze supervision (lambda = 0)",
    )
    p.add_argument("--flip-prob", dest="flip_prob", type=float)
    p.add_argument("--heatmap-sigma", dest="heatmap_sigma", type=float)
    p.add_argument(
        "--skip-out-of-frame-gaze", dest="skip_out_of_frame_gaze",
        action="store_true", default=None,
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--attention-stage", dest="attention_stage", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument(
        "--scale-per-timestamp", dest="scale_per_timestamp",
        action="store_true", default=None,
    )
    p.add_argument(
        "--relaxed-folds", dest="relaxed_folds", action="store_true",
        default=None, help="allow other than 8 users",
    )
    p.add_argument("--log-every", dest="log_every", type=int)
    p.set_defaults(func=cmd_train)


def _add_eval_parser(sub):
    p = sub.add_parser("eval", help="evaluate checkpoints, write metrics/plots")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--checkpoint", help="a single checkpoint file")
    p.add_argument("--run-dir", dest="run_dir", help="train output with fold_*/")
    p.add_argument("--fold", help="override the checkpoint's fold")
    p.add_argument("--window", type=int)
    p.add_argument("--fps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument(
        "--plot-timeline", dest="plot_timeline", action="store_true",
        default=None,
    )
    p.add_argument(
        "--plot-attn", dest="plot_attn", action="store_true", default=None,
    )
    p.add_argument(
        "--relaxed-folds", dest="relaxed_folds", action="store_true",
        default=None,
    )
    p.set_defaults(func=cmd_eval)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazeattn",
        description="Gaze-guided spatio-temporal attention for gesture "
        "recognition in video.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth_parser(sub)
    _add_train_parser(sub)
    _add_eval_parser(sub)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValidationError, GazeAttnError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
