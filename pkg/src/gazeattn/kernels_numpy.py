"""Pure-numpy reference kernels (channels-last layout).

All kernels operate on *pre-padded* inputs: padding policy (edge-replication
in time, zeros or -inf spatially) lives in ``ops.py`` and is shared with the
numba backend. Feature volumes are (B, T, H, W, C) and filters
(kt, kh, kw, Cin, Cout). Convolutions are lowered to im2col + GEMM; the
backward pass w.r.t. the input scatters with ``np.add.at``, which is correct
but slow, and is exactly what the numba backend exists to beat.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Patch-index tables keyed by (padded spatial dims, kernel, stride). Small:
# one entry per distinct layer geometry.
_INDEX_CACHE: dict = {}


def _out_dims(xp_shape, kernel, stride):
    return tuple(
        (xp_shape[1 + i] - kernel[i]) // stride[i] + 1 for i in range(3)
    )


def _patch_indices(padded_dims, kernel, stride):
    """Flat indices into a padded (Tp,Hp,Wp) volume for every output patch.

    Returns (starts, offsets): starts has one entry per output voxel, offsets
    one per kernel tap; starts[v] + offsets[j] addresses tap j of patch v.
    """
    key = (padded_dims, kernel, stride)
    cached = _INDEX_CACHE.get(key)
    if cached is not None:
        return cached
    tp, hp, wp = padded_dims
    kt, kh, kw = kernel
    st, sh, sw = stride
    to = (tp - kt) // st + 1
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    t0 = np.arange(to) * st
    h0 = np.arange(ho) * sh
    w0 = np.arange(wo) * sw
    starts = (
        t0[:, None, None] * (hp * wp) + h0[None, :, None] * wp + w0[None, None, :]
    ).ravel()
    dt = np.arange(kt)
    dh = np.arange(kh)
    dw = np.arange(kw)
    offsets = (
        dt[:, None, None] * (hp * wp) + dh[None, :, None] * wp + dw[None, None, :]
    ).ravel()
    _INDEX_CACHE[key] = (starts, offsets)
    return starts, offsets


def _im2col(xp, kernel, stride):
    """(B,Tp,Hp,Wp,C) -> (B, V, kt*kh*kw*C) patch matrix, V output voxels."""
    b, c = xp.shape[0], xp.shape[4]
    windows = sliding_window_view(xp, kernel, axis=(1, 2, 3))
    st, sh, sw = stride
    windows = windows[:, ::st, ::sh, ::sw]
    to, ho, wo = windows.shape[1:4]
    # (B,To,Ho,Wo,C,kt,kh,kw) -> (B,To,Ho,Wo,kt,kh,kw,C)
    cols = windows.transpose(0, 1, 2, 3, 5, 6, 7, 4).reshape(
        b, to * ho * wo, kernel[0] * kernel[1] * kernel[2] * c
    )
    return np.ascontiguousarray(cols), (to, ho, wo)


def conv3d_fwd(xp, w, stride):
    b = xp.shape[0]
    cout = w.shape[4]
    cols, (to, ho, wo) = _im2col(xp, w.shape[:3], stride)
    out = cols @ w.reshape(-1, cout)
    return out.reshape(b, to, ho, wo, cout)


def conv3d_bwd_w(dout, xp, w_shape, stride):
    cout = w_shape[4]
    cols, _ = _im2col(xp, w_shape[:3], stride)
    dm = dout.reshape(dout.shape[0], -1, cout)
    dw = np.einsum("bvk,bvo->ko", cols, dm, optimize=True)
    return dw.reshape(w_shape)


def conv3d_bwd_x(dout, w, stride, xp_shape):
    b = dout.shape[0]
    tp, hp, wp, cin = xp_shape[1:]
    kernel = w.shape[:3]
    cout = w.shape[4]
    starts, offsets = _patch_indices((tp, hp, wp), kernel, stride)
    dm = dout.reshape(b, -1, cout)
    # (B, V, k3*Cin)
    dcols = dm @ w.reshape(-1, cout).T
    dcols = dcols.reshape(b, starts.size * offsets.size, cin)
    idx = (starts[:, None] + offsets[None, :]).ravel()
    dxp = np.zeros((b, tp * hp * wp, cin), dtype=dout.dtype)
    np.add.at(dxp, (np.arange(b)[:, None], idx[None, :]), dcols)
    return dxp.reshape(xp_shape)


def maxpool3d_fwd(xp, kernel, stride):
    b, c = xp.shape[0], xp.shape[4]
    tp, hp, wp = xp.shape[1:4]
    windows = sliding_window_view(xp, kernel, axis=(1, 2, 3))
    st, sh, sw = stride
    windows = windows[:, ::st, ::sh, ::sw]
    to, ho, wo = windows.shape[1:4]
    flat = windows.reshape(b, to, ho, wo, c, -1)
    local = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    starts, offsets = _patch_indices((tp, hp, wp), kernel, stride)
    argmax = starts.reshape(1, to, ho, wo, 1) + offsets[local]
    return np.ascontiguousarray(out), argmax


def maxpool3d_bwd(dout, argmax, xp_shape):
    b, c = xp_shape[0], xp_shape[4]
    volume = xp_shape[1] * xp_shape[2] * xp_shape[3]
    dxp = np.zeros((b, volume, c), dtype=dout.dtype)
    bidx = np.repeat(np.arange(b), argmax[0].size).reshape(argmax.shape)
    cidx = np.broadcast_to(np.arange(c), argmax.shape)
    np.add.at(dxp, (bidx.ravel(), argmax.ravel(), cidx.ravel()), dout.ravel())
    return dxp.reshape(xp_shape)
