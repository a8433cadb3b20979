"""Differentiable building blocks for the 3D networks.

Every op returns ``(out, cache)``; the matching ``*_backward(dout, cache)``
returns input gradients (and parameter gradients where applicable). There is
no tape: callers compose backward passes explicitly in reverse order.

Layout: feature volumes are channels-last (B, T, H, W, C) and filters are
(kt, kh, kw, Cin, Cout), which keeps the kernels' inner loops contiguous.

Padding policy, used by all 'same' convolutions and poolings:

* time axis: edge replication. A clip window is a freeze-frame extension of
  the video outside its bounds, so replicating boundary frames keeps a
  temporally constant input exactly constant under inflated filters.
* spatial axes: zeros for convolution, -inf for max pooling.

Convolutions and poolings with nontrivial kernels dispatch to the selected
kernel backend (numba or numpy); 1x1x1 stride-1 convolutions are plain
matrix multiplies and bypass it.
"""

import numpy as np

from . import backend
from .errors import ShapeError


def _same_pads(kernel):
    return tuple((k - 1) // 2 for k in kernel)


def pad_volume(x, pads, spatial_value=0.0):
    """Pad (B,T,H,W,C): edge-replicate along T, constant along H and W."""
    pt, ph, pw = pads
    if pt:
        x = np.pad(x, ((0, 0), (pt, pt), (0, 0), (0, 0), (0, 0)), mode="edge")
    if ph or pw:
        x = np.pad(
            x,
            ((0, 0), (0, 0), (ph, ph), (pw, pw), (0, 0)),
            mode="constant",
            constant_values=spatial_value,
        )
    return x


def fold_padding_grad(dxp, pads, orig_shape):
    """Collapse a padded-input gradient back onto the unpadded input.

    Temporal padding replicated frames 0 and T-1, so their gradient folds
    into those frames; spatial padding rows are discarded.
    """
    pt, ph, pw = pads
    t = orig_shape[1]
    if ph or pw:
        dxp = dxp[:, :, ph : dxp.shape[2] - ph, pw : dxp.shape[3] - pw]
    if pt:
        dx = dxp[:, pt : pt + t].copy()
        dx[:, 0] += dxp[:, :pt].sum(axis=1)
        dx[:, t - 1] += dxp[:, pt + t :].sum(axis=1)
        return dx
    return dxp


def conv3d(x, w, b, stride=(1, 1, 1)):
    """'Same'-padded strided 3D convolution with bias.

    x: (B,T,H,W,Cin); w: (kt,kh,kw,Cin,Cout); b: (Cout,).
    """
    if x.ndim != 5 or w.ndim != 5:
        raise ShapeError(f"conv3d expects 5D arrays, got {x.shape} and {w.shape}")
    if x.shape[4] != w.shape[3]:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[4]}, filter expects {w.shape[3]}"
        )
    kernel = w.shape[:3]
    cout = w.shape[4]
    if kernel == (1, 1, 1) and stride == (1, 1, 1):
        cin = x.shape[4]
        xm = np.ascontiguousarray(x.reshape(-1, cin))
        out = xm @ w.reshape(cin, cout) + b
        cache = ("pw", x.shape, xm, w)
        return out.reshape(x.shape[:4] + (cout,)), cache
    pads = _same_pads(kernel)
    xp = np.ascontiguousarray(pad_volume(x, pads))
    out = backend.conv3d_fwd(xp, w, stride)
    out += b
    cache = ("full", x.shape, xp, w, stride, pads)
    return out, cache


def conv3d_backward(dout, cache, need_dx=True):
    if cache[0] == "pw":
        _, x_shape, xm, w = cache
        cin, cout = w.shape[3], w.shape[4]
        dm = np.ascontiguousarray(dout.reshape(-1, cout))
        dx = (dm @ w.reshape(cin, cout).T).reshape(x_shape) if need_dx else None
        dw = (xm.T @ dm).reshape(w.shape)
        db = dm.sum(axis=0)
        return dx, dw, db
    _, x_shape, xp, w, stride, pads = cache
    dout = np.ascontiguousarray(dout)
    dx = None
    if need_dx:
        dxp = backend.conv3d_bwd_x(dout, w, stride, xp.shape)
        dx = fold_padding_grad(dxp, pads, x_shape)
    dw = backend.conv3d_bwd_w(dout, xp, w.shape, stride)
    db = dout.reshape(-1, w.shape[4]).sum(axis=0)
    return dx, dw, db


def maxpool3d(x, kernel=(3, 3, 3), stride=(1, 1, 1)):
    """'Same'-padded 3D max pooling (edge frames in time, -inf spatially)."""
    pads = _same_pads(kernel)
    xp = np.ascontiguousarray(pad_volume(x, pads, spatial_value=-np.inf))
    out, argmax = backend.maxpool3d_fwd(xp, kernel, stride)
    cache = (x.shape, xp.shape, argmax, pads)
    return out, cache


def maxpool3d_backward(dout, cache):
    x_shape, xp_shape, argmax, pads = cache
    dxp = backend.maxpool3d_bwd(dout, argmax, xp_shape)
    return fold_padding_grad(dxp, pads, x_shape)


def batchnorm(x, gamma, beta, running_mean, running_var, train,
              momentum=0.1, eps=1e-5):
    """Per-channel batch normalization over (B,T,H,W) of a (B,T,H,W,C) volume.

    Training mode normalizes with batch statistics and updates the running
    buffers in place; eval mode uses the buffers. Returns (out, cache);
    cache is None in eval mode (backward is only needed when training).
    """
    if train:
        axes = (0, 1, 2, 3)
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
        invstd = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean) * invstd
        out = xhat * gamma + beta
        return out, (xhat, invstd.astype(x.dtype), gamma)
    invstd = 1.0 / np.sqrt(running_var + eps)
    out = (x - running_mean) * (invstd * gamma) + beta
    return out, None


def batchnorm_backward(dout, cache):
    xhat, invstd, gamma = cache
    axes = (0, 1, 2, 3)
    n = dout.size // dout.shape[-1]
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dx = (gamma * invstd / n) * (n * dout - dbeta - xhat * dgamma)
    return dx.astype(dout.dtype, copy=False), dgamma, dbeta


def relu(x):
    out = np.maximum(x, 0)
    return out, (x > 0)


def relu_backward(dout, cache):
    return dout * cache


def global_avg_pool(x):
    """(B,T,H,W,C) -> (B,C) mean over the spatio-temporal volume."""
    return x.mean(axis=(1, 2, 3)), x.shape


def global_avg_pool_backward(dout, x_shape):
    volume = x_shape[1] * x_shape[2] * x_shape[3]
    scale = dout.dtype.type(1.0 / volume)
    return np.broadcast_to(
        (dout * scale)[:, None, None, None, :], x_shape
    ).copy()


def dense(x, w, b):
    """x: (B,Cin); w: (Cin,Cout); b: (Cout,)."""
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def dropout(x, rate, rng, train):
    """Inverted dropout; identity when not training or rate == 0."""
    if not train or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    keep /= x.dtype.type(1.0 - rate)
    return x * keep, keep


def dropout_backward(dout, cache):
    if cache is None:
        return dout
    return dout * cache


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch.

    logits: (B,K); labels: (B,) int class indices. Returns (loss, dlogits).
    """
    if logits.ndim != 2 or labels.shape[0] != logits.shape[0]:
        raise ShapeError(
            f"logits {logits.shape} incompatible with labels {labels.shape}"
        )
    bsz = logits.shape[0]
    probs = softmax(logits)
    picked = probs[np.arange(bsz), labels]
    loss = float(-np.log(np.maximum(picked, 1e-30)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(bsz), labels] -= 1.0
    dlogits /= bsz
    return loss, dlogits
