"""Training loop: composite loss, SGD with momentum, lr schedule, flips.

The loop is iteration-driven (not epoch-driven): clips are visited in a
shuffled order that reshuffles on exhaustion, and exactly total_iters
optimizer steps run. Everything stochastic (init, shuffling, flips, dropout)
draws from one generator in a fixed order, so a fixed seed with the serial
loader reproduces checkpoints byte for byte.
"""

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import backbone as bb
from .attention import attention_loss, attention_loss_backward
from .checkpoint import save_checkpoint
from .errors import ConfigError, TrainingDivergedError, ValidationError
from .gaze import DEFAULT_SIGMA, flip_gaze, gaze_in_frame_mask, heatmap_volume
from .ops import softmax_cross_entropy

CHECKPOINT_NAME = "checkpoint.ckpt"
LOG_NAME = "train_log.jsonl"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 12
    momentum: float = 0.9
    weight_decay: float = 7e-7
    lr0: float = 0.1
    lr_decay_factor: float = 0.1
    lr_decay_at_iter: int = 1000
    lr_step_every: bool = False  # True: decay every lr_decay_at_iter iters
    total_iters: int = 10000
    lambda_attn: float = 1.0
    flip_prob: float = 0.5
    heatmap_sigma: float = DEFAULT_SIGMA
    skip_out_of_frame_gaze: bool = False
    seed: int = 0
    checkpoint_every: int = 0  # 0: final checkpoint only

    def __post_init__(self):
        if self.batch_size < 1 or self.total_iters < 1:
            raise ConfigError("batch_size and total_iters must be positive")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigError(f"flip_prob must be in [0,1], got {self.flip_prob}")
        if self.lr0 <= 0 or self.lr_decay_factor <= 0 or self.lr_decay_at_iter < 1:
            raise ConfigError("learning-rate schedule values must be positive")
        if self.lambda_attn < 0 or self.weight_decay < 0 or self.momentum < 0:
            raise ConfigError("loss/optimizer weights must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """Learning rate for a given iteration (single decay by default)."""
    if iteration < 0:
        raise ConfigError(f"iteration must be >= 0, got {iteration}")
    if cfg.lr_step_every:
        return cfg.lr0 * cfg.lr_decay_factor ** (iteration // cfg.lr_decay_at_iter)
    if iteration < cfg.lr_decay_at_iter:
        return cfg.lr0
    return cfg.lr0 * cfg.lr_decay_factor


def sgd_step(params, grads, state, lr, momentum=0.9, weight_decay=7e-7):
    """One SGD+momentum step, in place.

    g' = grad + wd * param;  buf = momentum * buf + g';  param -= lr * buf.
    state holds the momentum buffers and is created lazily.
    """
    for name in sorted(params):
        grad = grads[name]
        if not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(
                f"non-finite gradient for {name!r} "
                f"(|g|max={np.abs(grad[np.isfinite(grad)]).max(initial=0.0):.3e})"
            )
        param = params[name]
        g = grad + weight_decay * param
        buf = state.get(name)
        if buf is None:
            buf = np.zeros_like(param)
            state[name] = buf
        buf *= momentum
        buf += g
        param -= lr * buf
    return params, state


def total_loss(logits, labels, attn, heat, lambda_attn):
    """Cross-entropy plus lambda * attention supervision loss (scalar).

    Accepts a batch: logits (B,K), labels (B,), attn/heat (B,T',h,w).
    """
    labels = np.atleast_1d(np.asarray(labels))
    if np.any(labels < 0):
        raise ValidationError("UNLABELED frames are not valid training targets")
    logits = np.atleast_2d(logits)
    ce, _ = softmax_cross_entropy(logits, labels)
    if lambda_attn == 0.0:
        return ce
    attn_term, _ = attention_loss(attn, heat)
    return ce + lambda_attn * attn_term


def flip_clip(frames, gaze_points):
    """Mirror frames horizontally and remap gaze x accordingly.

    frames: (..., H, W, C); gaze_points: (..., 2) in pixels.
    """
    width = frames.shape[-2]
    flipped = frames[..., ::-1, :].copy()
    g = gaze_points.copy()
    g[..., 0] = flip_gaze(g[..., 0], width)
    return flipped, g


def augment(frames, gaze_points, rng, flip_prob=0.5):
    """Horizontal flip with probability flip_prob, gaze adjusted to match."""
    if rng.random() < flip_prob:
        return flip_clip(frames, gaze_points)
    return frames, gaze_points


def _augment_batch(clips, gaze, rng, flip_prob):
    flips = rng.random(len(clips)) < flip_prob
    for i in np.flatnonzero(flips):
        clips[i], gaze[i] = flip_clip(clips[i], gaze[i])
    return clips, gaze


class _ShuffledSampler:
    """Endless shuffled index stream with reshuffle on exhaustion."""

    def __init__(self, n, rng):
        self.n = n
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def take(self, k):
        out = []
        while len(out) < k:
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            out.append(int(self.order[self.pos]))
            self.pos += 1
        return out


def train(clipset, train_cfg: TrainConfig, model_cfg: bb.BackboneConfig,
          out_dir, extra_config=None, progress=None):
    """Train on a ClipSet; writes checkpoint(s) and a JSON-lines metrics log.

    Returns (checkpoint_path, log_rows). extra_config is merged into the
    checkpoint's config snapshot (e.g. dataset/fold provenance).
    """
    if len(clipset) == 0:
        raise ValidationError("training split is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(train_cfg.seed)
    params = bb.init_params(model_cfg, rng)
    buffers = bb.init_buffers(model_cfg)
    state: dict[str, np.ndarray] = {}
    attn_t, attn_h, attn_w = bb.attention_map_dims(model_cfg)
    frame_h, frame_w = model_cfg.in_height, model_cfg.in_width
    sampler = _ShuffledSampler(len(clipset), rng)

    snapshot = {
        "backbone": model_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "classes": list(clipset.class_ids),
        "window": clipset.window,
    }
    if extra_config:
        snapshot.update(extra_config)

    ckpt_path = out_dir / CHECKPOINT_NAME
    log_path = out_dir / LOG_NAME
    log_rows = []
    supervise = train_cfg.lambda_attn > 0.0
    with open(log_path, "w", encoding="utf-8") as log:
        for it in range(train_cfg.total_iters):
            lr = lr_at(it, train_cfg)
            batch = sampler.take(train_cfg.batch_size)
            clips, gaze, labels = clipset.gather(batch)
            clips, gaze = _augment_batch(clips, gaze, rng, train_cfg.flip_prob)

            logits, attn, cache = bb.forward(
                params, buffers, clips, model_cfg, train=True, rng=rng
            )
            ce, dlogits = softmax_cross_entropy(logits, labels)
            attn_term = 0.0
            dattn = None
            if supervise:
                heat = heatmap_volume(
                    gaze, frame_w, frame_h, attn_w, attn_h,
                    attn_len=attn_t, sigma=train_cfg.heatmap_sigma,
                ).astype(np.float32)
                mask = None
                if train_cfg.skip_out_of_frame_gaze:
                    mask = gaze_in_frame_mask(gaze, frame_w, frame_h, attn_t)
                attn_term, kl_cache = attention_loss(attn, heat, mask)
                dattn = attention_loss_backward(
                    kl_cache, scale=train_cfg.lambda_attn
                )
            total = ce + train_cfg.lambda_attn * attn_term

            row = {
                "iter": it,
                "lr": lr,
                "ce_loss": round(ce, 6),
                "attn_loss": round(float(attn_term), 6),
                "total": round(float(total), 6),
            }
            log.write(json.dumps(row) + "\n")
            log_rows.append(row)

            if not np.isfinite(total):
                save_checkpoint(ckpt_path, params, state, it, snapshot, buffers)
                raise TrainingDivergedError(
                    f"non-finite loss at iteration {it} "
                    f"(ce={ce}, attn={attn_term}); last state saved to {ckpt_path}"
                )

            grads = bb.backward(dlogits, dattn, cache)
            try:
                sgd_step(
                    params, grads, state, lr,
                    momentum=train_cfg.momentum,
                    weight_decay=train_cfg.weight_decay,
                )
            except TrainingDivergedError:
                save_checkpoint(ckpt_path, params, state, it, snapshot, buffers)
                raise

            if (
                train_cfg.checkpoint_every
                and (it + 1) % train_cfg.checkpoint_every == 0
                and (it + 1) < train_cfg.total_iters
            ):
                save_checkpoint(
                    out_dir / f"checkpoint_{it + 1:06d}.ckpt",
                    params, state, it + 1, snapshot, buffers,
                )
            if progress is not None:
                progress(it, row)
    save_checkpoint(
        ckpt_path, params, state, train_cfg.total_iters, snapshot, buffers
    )
    return ckpt_path, log_rows
