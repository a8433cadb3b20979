"""Width-reduced 3D convolutional classifier with mid-network attention.

Stem block -> stages of conv blocks -> attention reweighting after the
configured stage -> global average pooling -> dropout -> affine classifier.
A conv block is Conv3d-BatchNorm-ReLU; the normalization is what keeps the
high-learning-rate SGD recipe stable without pretrained weights. Trainable
parameters live in a flat {name: array} dict, batchnorm running statistics
in a parallel buffers dict, so the optimizer and the checkpoint format stay
trivial.

Also home to the 2D->3D filter inflation rule: a 2D filter is repeated N
times along time and divided by N, so a temporally constant input produces
the 2D network's response at every timestamp (pooling kernels carry over
unchanged).
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import ops
from .attention import (
    DEFAULT_BRANCH_WIDTHS,
    DEFAULT_REDUCE_WIDTHS,
    apply_attention,
    apply_attention_backward,
    attention_backward,
    attention_forward,
    init_attention_params,
    uniform_conv_init,
)
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class BackboneConfig:
    in_frames: int = 8
    in_height: int = 64
    in_width: int = 64
    in_channels: int = 3
    num_classes: int = 4
    stem_channels: int = 16
    stem_kernel: tuple = (3, 5, 5)
    stem_stride: tuple = (2, 2, 2)
    stage_channels: tuple = (16, 32, 64)
    stage_kernel: tuple = (3, 3, 3)
    stage_strides: tuple = ((1, 2, 2), (1, 2, 2), (1, 1, 1))
    attention_stage: int = 2  # attention applied after this stage, 1-based
    attention_branch_widths: tuple = DEFAULT_BRANCH_WIDTHS
    attention_reduce_widths: tuple = DEFAULT_REDUCE_WIDTHS
    scale_per_timestamp: bool = False
    batchnorm: bool = True
    dropout: float = 0.5

    def __post_init__(self):
        if len(self.stage_channels) != len(self.stage_strides):
            raise ConfigError("stage_channels and stage_strides length mismatch")
        if not 1 <= self.attention_stage <= len(self.stage_channels):
            raise ConfigError(
                f"attention_stage {self.attention_stage} not in "
                f"[1,{len(self.stage_channels)}]"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        kwargs = dict(d)
        for key in ("stem_kernel", "stem_stride", "stage_channels",
                    "stage_kernel", "attention_branch_widths",
                    "attention_reduce_widths"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "stage_strides" in kwargs:
            kwargs["stage_strides"] = tuple(
                tuple(s) for s in kwargs["stage_strides"]
            )
        return cls(**kwargs)


def _out_dim(n: int, stride: int) -> int:
    return (n + stride - 1) // stride  # 'same' padding with odd kernels


def stage_dims(cfg: BackboneConfig):
    """(T,H,W) entering the stem, each stage, and the classifier head."""
    dims = [(cfg.in_frames, cfg.in_height, cfg.in_width)]
    cur = tuple(
        _out_dim(n, s) for n, s in zip(dims[0], cfg.stem_stride)
    )
    dims.append(cur)
    for stride in cfg.stage_strides:
        cur = tuple(_out_dim(n, s) for n, s in zip(cur, stride))
        dims.append(cur)
    return dims


def attention_map_dims(cfg: BackboneConfig):
    """(T',H',W') of the attention map produced by this config."""
    return stage_dims(cfg)[cfg.attention_stage + 1]


def init_params(cfg: BackboneConfig, rng, dtype=np.float32):
    """All backbone + attention parameters, in a deterministic creation order."""
    params: dict[str, np.ndarray] = {}

    def add_block(name, kernel, cin, cout):
        w, b = uniform_conv_init(rng, kernel, cin, cout, dtype)
        params[f"{name}.w"], params[f"{name}.b"] = w, b
        if cfg.batchnorm:
            params[f"{name}.bn.g"] = np.ones(cout, dtype=dtype)
            params[f"{name}.bn.b"] = np.zeros(cout, dtype=dtype)

    add_block("stem", cfg.stem_kernel, cfg.in_channels, cfg.stem_channels)
    cin = cfg.stem_channels
    for i, cout in enumerate(cfg.stage_channels, start=1):
        add_block(f"stage{i}", cfg.stage_kernel, cin, cout)
        cin = cout
    attn_cin = cfg.stage_channels[cfg.attention_stage - 1]
    params.update(
        init_attention_params(
            rng, attn_cin,
            branch_widths=cfg.attention_branch_widths,
            reduce_widths=cfg.attention_reduce_widths,
            dtype=dtype, prefix="attn.",
        )
    )
    fan_in = cfg.stage_channels[-1]
    bound = 1.0 / np.sqrt(fan_in)
    params["fc.w"] = rng.uniform(
        -bound, bound, size=(fan_in, cfg.num_classes)
    ).astype(dtype)
    params["fc.b"] = np.zeros(cfg.num_classes, dtype=dtype)
    return params


def init_buffers(cfg: BackboneConfig, dtype=np.float32):
    """Batchnorm running statistics (empty dict when batchnorm is off)."""
    buffers: dict[str, np.ndarray] = {}
    if not cfg.batchnorm:
        return buffers
    blocks = [("stem", cfg.stem_channels)] + [
        (f"stage{i}", c) for i, c in enumerate(cfg.stage_channels, start=1)
    ]
    for name, channels in blocks:
        buffers[f"{name}.bn.mean"] = np.zeros(channels, dtype=dtype)
        buffers[f"{name}.bn.var"] = np.ones(channels, dtype=dtype)
    return buffers


def _block_forward(x, params, buffers, name, stride, cfg, train):
    x, c_conv = ops.conv3d(x, params[f"{name}.w"], params[f"{name}.b"], stride)
    c_bn = None
    if cfg.batchnorm:
        x, c_bn = ops.batchnorm(
            x, params[f"{name}.bn.g"], params[f"{name}.bn.b"],
            buffers[f"{name}.bn.mean"], buffers[f"{name}.bn.var"], train,
        )
    x, m_relu = ops.relu(x)
    return x, (name, c_conv, c_bn, m_relu)


def _block_backward(dx, block_cache, grads, need_dx=True):
    name, c_conv, c_bn, m_relu = block_cache
    dx = ops.relu_backward(dx, m_relu)
    if c_bn is not None:
        dx, grads[f"{name}.bn.g"], grads[f"{name}.bn.b"] = ops.batchnorm_backward(
            dx, c_bn
        )
    dx, grads[f"{name}.w"], grads[f"{name}.b"] = ops.conv3d_backward(
        dx, c_conv, need_dx=need_dx
    )
    return dx


def forward(params, buffers, clips, cfg: BackboneConfig, train: bool = False,
            rng=None):
    """clips (B,T,H,W,C) -> (logits (B,K), attention map (B,T',H',W'), cache)."""
    expected = (cfg.in_frames, cfg.in_height, cfg.in_width, cfg.in_channels)
    if clips.ndim != 5 or clips.shape[1:] != expected:
        raise ShapeError(
            f"clip batch {clips.shape} does not match config {expected}"
        )
    if train and cfg.dropout > 0 and rng is None:
        raise ConfigError("training forward with dropout needs an rng")
    x, c_stem = _block_forward(
        clips, params, buffers, "stem", cfg.stem_stride, cfg, train
    )
    stage_caches = []
    attn = None
    c_attn = None
    c_apply = None
    for i, stride in enumerate(cfg.stage_strides, start=1):
        x, c_block = _block_forward(
            x, params, buffers, f"stage{i}", stride, cfg, train
        )
        stage_caches.append(c_block)
        if i == cfg.attention_stage:
            attn, c_attn = attention_forward(
                x, params, prefix="attn.",
                per_timestamp_scale=cfg.scale_per_timestamp,
            )
            x, c_apply = apply_attention(x, attn)
    pooled, c_gap = ops.global_avg_pool(x)
    dropped, c_drop = ops.dropout(pooled, cfg.dropout, rng, train)
    logits, c_fc = ops.dense(dropped, params["fc.w"], params["fc.b"])
    cache = (cfg, c_stem, stage_caches, c_attn, c_apply, c_gap, c_drop, c_fc)
    return logits, attn, cache


def backward(dlogits, dattn_loss, cache):
    """Gradients for every parameter.

    dlogits: gradient w.r.t. logits; dattn_loss: gradient w.r.t. the
    attention map coming from the supervision loss (None when unsupervised).
    """
    (cfg, c_stem, stage_caches, c_attn, c_apply, c_gap, c_drop, c_fc) = cache
    grads: dict[str, np.ndarray] = {}
    dpooled, grads["fc.w"], grads["fc.b"] = ops.dense_backward(dlogits, c_fc)
    dpooled = ops.dropout_backward(dpooled, c_drop)
    dx = ops.global_avg_pool_backward(dpooled, c_gap)
    for i in range(len(stage_caches), 0, -1):
        if i == cfg.attention_stage:
            dx, dattn = apply_attention_backward(dx, c_apply)
            if dattn_loss is not None:
                dattn = dattn + dattn_loss
            dx_attn, attn_grads = attention_backward(dattn, c_attn)
            grads.update(attn_grads)
            dx = dx + dx_attn
        dx = _block_backward(dx, stage_caches[i - 1], grads)
    _block_backward(dx, c_stem, grads, need_dx=False)
    return grads


def predict_logits(params, buffers, clips, cfg: BackboneConfig):
    """Eval-mode logits (dropout off, no attention gradient bookkeeping)."""
    logits, _, _ = forward(params, buffers, clips, cfg, train=False)
    return logits


def make_predict_fn(params, buffers, cfg: BackboneConfig, batch_size: int = 64):
    """Batched predictor clips -> logits, for the evaluation loop."""

    def predict(clips):
        chunks = [
            predict_logits(params, buffers, clips[i : i + batch_size], cfg)
            for i in range(0, len(clips), batch_size)
        ]
        return np.concatenate(chunks, axis=0)

    return predict


def inflate_2d(filter2d, n: int):
    """Inflate (Cout,Cin,kH,kW) 2D filters to (Cout,Cin,N,kH,kW).

    Every temporal slice equals filter2d / N, so the temporal sum reproduces
    the 2D filter exactly.
    """
    if n < 1:
        raise ConfigError(f"temporal extent must be >= 1, got {n}")
    filter2d = np.asarray(filter2d)
    if filter2d.ndim != 4:
        raise ShapeError(f"expected (Cout,Cin,kH,kW), got {filter2d.shape}")
    scaled = filter2d / n
    return np.repeat(scaled[:, :, None, :, :], n, axis=2)


def filters_to_channels_last(w):
    """(Cout,Cin,kt,kH,kW) -> (kt,kH,kW,Cin,Cout), the network's layout."""
    return np.ascontiguousarray(np.transpose(w, (2, 3, 4, 1, 0)))
