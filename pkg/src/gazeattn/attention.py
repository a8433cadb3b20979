"""Spatio-temporal attention block and its gaze-supervision loss.

The block maps a feature volume X (B,T,H,W,C) to an attention map A
(B,T,H,W) in [0,1]:

    b0 = conv1x1x1(X)
    b1 = conv3x3x3(conv1x1x1(X))
    b2 = conv3x3x3(conv1x1x1(X))
    b3 = conv1x1x1(maxpool3x3x3(X))
    A  = minmax_scale(conv1x1x1(concat[b0;b1;b2;b3]))

All convolutions carry bias and preserve (T,H,W). The map is applied to the
features as a residual reweighting X' = X * (1 + A), so an all-zero map is
the identity. Supervision is a forward KL divergence between the gaze
heatmap and the per-timestamp-normalized attention map.
"""

import numpy as np

from . import ops
from .errors import ShapeError

# (w0, w1, w2, w3): branch output widths; (r1, r2): 1x1x1 reduction widths
DEFAULT_BRANCH_WIDTHS = (32, 32, 16, 16)
DEFAULT_REDUCE_WIDTHS = (24, 8)

LOSS_EPS = 1e-8


def uniform_conv_init(rng, kernel, cin, cout, dtype=np.float32):
    """Centered uniform with fan-in scaling; matching zero bias."""
    fan_in = cin * kernel[0] * kernel[1] * kernel[2]
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(*kernel, cin, cout)).astype(dtype)
    return w, np.zeros(cout, dtype=dtype)


def init_attention_params(rng, in_channels,
                          branch_widths=DEFAULT_BRANCH_WIDTHS,
                          reduce_widths=DEFAULT_REDUCE_WIDTHS,
                          dtype=np.float32, prefix=""):
    """Parameter dict for one attention block (keys are prefix + local name)."""
    w0, w1, w2, w3 = branch_widths
    r1, r2 = reduce_widths
    p = {}

    def add(name, kernel, cin, cout):
        w, b = uniform_conv_init(rng, kernel, cin, cout, dtype)
        p[prefix + name + ".w"] = w
        p[prefix + name + ".b"] = b

    add("b0", (1, 1, 1), in_channels, w0)
    add("b1a", (1, 1, 1), in_channels, r1)
    add("b1b", (3, 3, 3), r1, w1)
    add("b2a", (1, 1, 1), in_channels, r2)
    add("b2b", (3, 3, 3), r2, w2)
    add("b3", (1, 1, 1), in_channels, w3)
    add("head", (1, 1, 1), w0 + w1 + w2 + w3, 1)
    return p


def _as_2d(v, per_timestamp):
    """View an attention response as (groups, cells) for min-max scaling."""
    if per_timestamp:
        return v.reshape(v.shape[0] * v.shape[1], -1)
    return v.reshape(v.shape[0], -1)


def minmax_scale(v):
    """Rescale an array linearly onto [0,1] over all its elements.

    A constant input maps to all zeros (the identity under residual
    attention application).
    """
    v = np.asarray(v)
    out, _ = _minmax_scale_2d(v.reshape(1, -1))
    return out.reshape(v.shape)


def _minmax_scale_2d(v2d):
    jmin = v2d.argmin(axis=1)
    jmax = v2d.argmax(axis=1)
    rows = np.arange(v2d.shape[0])
    lo = v2d[rows, jmin]
    hi = v2d[rows, jmax]
    span = hi - lo
    degenerate = span == 0
    safe = np.where(degenerate, 1, span)
    out = (v2d - lo[:, None]) / safe[:, None]
    out[degenerate] = 0
    return out, (out, jmin, jmax, safe, degenerate)


def _minmax_scale_2d_backward(dout2d, cache):
    out, jmin, jmax, safe, degenerate = cache
    rows = np.arange(out.shape[0])
    g = dout2d / safe[:, None]
    sdot = (dout2d * out).sum(axis=1) / safe
    ssum = dout2d.sum(axis=1) / safe
    np.add.at(g, (rows, jmax), -sdot)
    np.add.at(g, (rows, jmin), sdot - ssum)
    g[degenerate] = 0
    return g


def attention_forward(x, params, prefix="", per_timestamp_scale=False):
    """Feature volume (B,T,H,W,C) -> attention map (B,T,H,W) in [0,1].

    Returns (attn, cache); cache drives attention_backward.
    """
    if x.ndim != 5:
        raise ShapeError(f"expected (B,T,H,W,C) features, got {x.shape}")
    p = lambda name: params[prefix + name]
    b0, c_b0 = ops.conv3d(x, p("b0.w"), p("b0.b"))
    r1, c_r1 = ops.conv3d(x, p("b1a.w"), p("b1a.b"))
    b1, c_b1 = ops.conv3d(r1, p("b1b.w"), p("b1b.b"))
    r2, c_r2 = ops.conv3d(x, p("b2a.w"), p("b2a.b"))
    b2, c_b2 = ops.conv3d(r2, p("b2b.w"), p("b2b.b"))
    pool, c_pool = ops.maxpool3d(x)
    b3, c_b3 = ops.conv3d(pool, p("b3.w"), p("b3.b"))
    cat = np.concatenate([b0, b1, b2, b3], axis=-1)
    resp, c_head = ops.conv3d(cat, p("head.w"), p("head.b"))
    resp = resp[..., 0]
    resp2d = _as_2d(resp, per_timestamp_scale)
    out2d, c_scale = _minmax_scale_2d(resp2d)
    attn = out2d.reshape(resp.shape)
    widths = (b0.shape[-1], b1.shape[-1], b2.shape[-1], b3.shape[-1])
    cache = (
        prefix, widths, per_timestamp_scale, resp.shape,
        c_b0, c_r1, c_b1, c_r2, c_b2, c_pool, c_b3, c_head, c_scale,
    )
    return attn, cache


def attention_backward(dattn, cache):
    """Backprop through the attention block.

    dattn: gradient w.r.t. the attention map (B,T,H,W).
    Returns (dx, grads) with grads keyed like the parameter dict.
    """
    (prefix, widths, per_timestamp_scale, resp_shape,
     c_b0, c_r1, c_b1, c_r2, c_b2, c_pool, c_b3, c_head, c_scale) = cache
    dattn2d = _as_2d(np.ascontiguousarray(dattn), per_timestamp_scale)
    dresp = _minmax_scale_2d_backward(dattn2d, c_scale).reshape(resp_shape)
    dcat, dw_head, db_head = ops.conv3d_backward(dresp[..., None], c_head)
    w0, w1, w2, w3 = widths
    d_b0 = dcat[..., :w0]
    d_b1 = dcat[..., w0 : w0 + w1]
    d_b2 = dcat[..., w0 + w1 : w0 + w1 + w2]
    d_b3 = dcat[..., w0 + w1 + w2 :]
    grads = {prefix + "head.w": dw_head, prefix + "head.b": db_head}

    dx_b0, grads[prefix + "b0.w"], grads[prefix + "b0.b"] = ops.conv3d_backward(
        d_b0, c_b0
    )
    d_r1, grads[prefix + "b1b.w"], grads[prefix + "b1b.b"] = ops.conv3d_backward(
        d_b1, c_b1
    )
    dx_b1, grads[prefix + "b1a.w"], grads[prefix + "b1a.b"] = ops.conv3d_backward(
        d_r1, c_r1
    )
    d_r2, grads[prefix + "b2b.w"], grads[prefix + "b2b.b"] = ops.conv3d_backward(
        d_b2, c_b2
    )
    dx_b2, grads[prefix + "b2a.w"], grads[prefix + "b2a.b"] = ops.conv3d_backward(
        d_r2, c_r2
    )
    d_pool, grads[prefix + "b3.w"], grads[prefix + "b3.b"] = ops.conv3d_backward(
        d_b3, c_b3
    )
    dx_b3 = ops.maxpool3d_backward(d_pool, c_pool)
    dx = dx_b0 + dx_b1 + dx_b2 + dx_b3
    return dx, grads


def apply_attention(x, attn):
    """Residual reweighting X' = X * (1 + A), broadcast across channels.

    x: (..., T, H, W, C); attn: (..., T, H, W). Shape-preserving.
    """
    if x.shape[:-1] != attn.shape:
        raise ShapeError(
            f"attention map {attn.shape} does not match features {x.shape}"
        )
    out = x * (1.0 + attn[..., None])
    return out, (x, attn)


def apply_attention_backward(dout, cache):
    x, attn = cache
    dx = dout * (1.0 + attn[..., None])
    dattn = (dout * x).sum(axis=-1)
    return dx, dattn


def attention_loss(attn, heat, mask=None):
    """Mean forward KL(G || normalized A) over timestamps; >= 0.

    attn, heat: (..., h, w) with matching shapes; the map axes are the last
    two. mask, when given, selects which timestamps contribute.
    Returns (loss, cache).
    """
    if attn.shape != heat.shape:
        raise ShapeError(
            f"attention {attn.shape} and heatmap {heat.shape} differ"
        )
    eps = attn.dtype.type(LOSS_EPS) if attn.dtype.kind == "f" else LOSS_EPS
    shifted = attn + eps
    denom = shifted.sum(axis=(-2, -1), keepdims=True)
    log_ahat = np.log(shifted) - np.log(denom)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(heat > 0, heat * (np.log(np.maximum(heat, 1e-300)) - log_ahat), 0.0)
    per_map = terms.sum(axis=(-2, -1))
    if mask is not None:
        count = max(int(mask.sum()), 1)
        loss = float(np.where(mask, per_map, 0.0).sum() / count)
    else:
        count = max(per_map.size, 1)
        loss = float(per_map.sum() / count)
    cache = (shifted, denom, heat, mask, count)
    return loss, cache


def attention_loss_backward(cache, scale=1.0):
    """Gradient of attention_loss w.r.t. the attention map, times scale."""
    shifted, denom, heat, mask, count = cache
    gsum = heat.sum(axis=(-2, -1), keepdims=True)
    dattn = (-heat / shifted + gsum / denom) * (scale / count)
    if mask is not None:
        dattn = np.where(mask[..., None, None], dattn, 0.0)
    return dattn.astype(shifted.dtype, copy=False)
