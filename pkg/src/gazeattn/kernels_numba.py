"""Numba-accelerated kernels (channels-last layout).

Same contract as ``kernels_numpy``: inputs arrive pre-padded, outputs are
dense C-contiguous arrays. Feature volumes are (B, T, H, W, C) and filters
(kt, kh, kw, Cin, Cout), so the innermost loops always run over contiguous
channel vectors and vectorize regardless of spatial stride. Parallel loops
are arranged so that every thread owns a disjoint slice of the output (no
atomics), which keeps results bit-reproducible run to run.
"""

import numpy as np
from numba import njit, prange

_JIT = dict(parallel=True, fastmath=True, cache=True)
# pooling compares against -inf padding, which fastmath's no-inf assumption
# must not touch
_JIT_POOL = dict(parallel=True, cache=True)


@njit(**_JIT)
def _conv3d_fwd(xp, w, st, sh, sw, out):
    b = xp.shape[0]
    kt, kh, kw, cin, cout = w.shape
    to, ho, wo = out.shape[1], out.shape[2], out.shape[3]
    for bt in prange(b * to):
        bi = bt // to
        t = bt % to
        t0 = t * st
        for h in range(ho):
            h0 = h * sh
            for x in range(wo):
                x0 = x * sw
                orow = out[bi, t, h, x]
                for dt in range(kt):
                    for dh in range(kh):
                        for dw in range(kw):
                            xrow = xp[bi, t0 + dt, h0 + dh, x0 + dw]
                            wmat = w[dt, dh, dw]
                            for ci in range(cin):
                                v = xrow[ci]
                                wrow = wmat[ci]
                                for co in range(cout):
                                    orow[co] += v * wrow[co]


@njit(**_JIT)
def _conv3d_bwd_x(dout, w, st, sh, sw, dxp):
    b = dout.shape[0]
    kt, kh, kw, cin, cout = w.shape
    to, ho, wo = dout.shape[1], dout.shape[2], dout.shape[3]
    for bi in prange(b):
        for t in range(to):
            t0 = t * st
            for h in range(ho):
                h0 = h * sh
                for x in range(wo):
                    x0 = x * sw
                    grow = dout[bi, t, h, x]
                    for dt in range(kt):
                        for dh in range(kh):
                            for dw in range(kw):
                                dxrow = dxp[bi, t0 + dt, h0 + dh, x0 + dw]
                                wmat = w[dt, dh, dw]
                                for ci in range(cin):
                                    wrow = wmat[ci]
                                    acc = grow[0] - grow[0]
                                    for co in range(cout):
                                        acc += grow[co] * wrow[co]
                                    dxrow[ci] += acc


@njit(**_JIT)
def _conv3d_bwd_w(dout, xp, st, sh, sw, dw_out):
    b = dout.shape[0]
    kt, kh, kw, cin, cout = dw_out.shape
    to, ho, wo = dout.shape[1], dout.shape[2], dout.shape[3]
    for tap in prange(kt * kh * kw):
        dt = tap // (kh * kw)
        dh = (tap // kw) % kh
        dw = tap % kw
        dwmat = dw_out[dt, dh, dw]
        for bi in range(b):
            for t in range(to):
                t0 = t * st + dt
                for h in range(ho):
                    h0 = h * sh + dh
                    for x in range(wo):
                        grow = dout[bi, t, h, x]
                        xrow = xp[bi, t0, h0, x * sw + dw]
                        for ci in range(cin):
                            v = xrow[ci]
                            dwrow = dwmat[ci]
                            for co in range(cout):
                                dwrow[co] += v * grow[co]


@njit(**_JIT_POOL)
def _maxpool3d_fwd(xp, kt, kh, kw, st, sh, sw, out, argmax):
    b, tp, hp, wp, c = xp.shape
    to, ho, wo = out.shape[1], out.shape[2], out.shape[3]
    for bt in prange(b * to):
        bi = bt // to
        t = bt % to
        t0 = t * st
        for h in range(ho):
            h0 = h * sh
            for x in range(wo):
                x0 = x * sw
                orow = out[bi, t, h, x]
                arow = argmax[bi, t, h, x]
                first = xp[bi, t0, h0, x0]
                idx0 = t0 * (hp * wp) + h0 * wp + x0
                for ci in range(c):
                    orow[ci] = first[ci]
                    arow[ci] = idx0
                for dt in range(kt):
                    for dh in range(kh):
                        for dw in range(kw):
                            xrow = xp[bi, t0 + dt, h0 + dh, x0 + dw]
                            idx = (
                                (t0 + dt) * (hp * wp)
                                + (h0 + dh) * wp
                                + (x0 + dw)
                            )
                            for ci in range(c):
                                v = xrow[ci]
                                if v > orow[ci]:
                                    orow[ci] = v
                                    arow[ci] = idx


@njit(**_JIT_POOL)
def _maxpool3d_bwd(dout, argmax, dxp):
    b, to, ho, wo, c = dout.shape
    for bi in prange(b):
        for t in range(to):
            for h in range(ho):
                for x in range(wo):
                    grow = dout[bi, t, h, x]
                    arow = argmax[bi, t, h, x]
                    for ci in range(c):
                        dxp[bi, arow[ci], ci] += grow[ci]


def _out_dims(xp_shape, kernel, stride):
    return tuple(
        (xp_shape[1 + i] - kernel[i]) // stride[i] + 1 for i in range(3)
    )


def conv3d_fwd(xp, w, stride):
    to, ho, wo = _out_dims(xp.shape, w.shape[:3], stride)
    out = np.zeros((xp.shape[0], to, ho, wo, w.shape[4]), dtype=xp.dtype)
    _conv3d_fwd(xp, w, stride[0], stride[1], stride[2], out)
    return out


def conv3d_bwd_x(dout, w, stride, xp_shape):
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    _conv3d_bwd_x(dout, w, stride[0], stride[1], stride[2], dxp)
    return dxp


def conv3d_bwd_w(dout, xp, w_shape, stride):
    dw = np.zeros(w_shape, dtype=dout.dtype)
    _conv3d_bwd_w(dout, xp, stride[0], stride[1], stride[2], dw)
    return dw


def maxpool3d_fwd(xp, kernel, stride):
    to, ho, wo = _out_dims(xp.shape, kernel, stride)
    out = np.empty((xp.shape[0], to, ho, wo, xp.shape[4]), dtype=xp.dtype)
    argmax = np.empty(out.shape, dtype=np.int64)
    _maxpool3d_fwd(
        xp, kernel[0], kernel[1], kernel[2], stride[0], stride[1], stride[2],
        out, argmax,
    )
    return out, argmax


def maxpool3d_bwd(dout, argmax, xp_shape):
    b = xp_shape[0]
    volume = xp_shape[1] * xp_shape[2] * xp_shape[3]
    dxp = np.zeros((b, volume, xp_shape[4]), dtype=dout.dtype)
    _maxpool3d_bwd(
        np.ascontiguousarray(dout), np.ascontiguousarray(argmax), dxp
    )
    return dxp.reshape(xp_shape)
