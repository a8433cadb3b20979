#!/usr/bin/env python3
"""Compare the numba and pure-numpy kernel backends.

Times the hot kernels (strided 3D convolution forward/backward, 3D max
pooling) at the layer shapes the default training configuration actually
uses, plus one full train-style forward+backward step. Run:

    python benchmarks/bench_backends.py [--batch 12] [--repeats 10]
"""

import argparse
import time

import numpy as np

from gazeattn import backend, ops
from gazeattn import backbone as bb
from gazeattn.attention import attention_loss, attention_loss_backward
from gazeattn.ops import softmax_cross_entropy

# (input shape without batch, cout, kernel, stride) per default-config layer
LAYERS = [
    ("stem", (8, 64, 64, 3), 16, (3, 5, 5), (2, 2, 2)),
    ("stage1", (4, 32, 32, 16), 16, (3, 3, 3), (1, 2, 2)),
    ("stage2", (4, 16, 16, 16), 32, (3, 3, 3), (1, 2, 2)),
    ("attn.b1b", (4, 8, 8, 24), 32, (3, 3, 3), (1, 1, 1)),
    ("attn.b2b", (4, 8, 8, 8), 16, (3, 3, 3), (1, 1, 1)),
    ("stage3", (4, 8, 8, 32), 64, (3, 3, 3), (1, 1, 1)),
]


def _time(fn, repeats):
    fn()  # warm-up (and numba compilation)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_kernels(batch, repeats):
    rng = np.random.default_rng(0)
    rows = []
    for name, shape, cout, kernel, stride in LAYERS:
        x = rng.standard_normal((batch, *shape)).astype(np.float32)
        w = (rng.standard_normal((*kernel, shape[-1], cout)) * 0.05).astype(
            np.float32
        )
        b = np.zeros(cout, dtype=np.float32)
        out, cache = ops.conv3d(x, w, b, stride)
        dout = np.ones_like(out)
        fwd = _time(lambda: ops.conv3d(x, w, b, stride), repeats)
        bwd = _time(lambda: ops.conv3d_backward(dout, cache), repeats)
        rows.append((name, fwd, bwd))
    x = rng.standard_normal((batch, 4, 8, 8, 32)).astype(np.float32)
    out, cache = ops.maxpool3d(x)
    dout = np.ones_like(out)
    rows.append(
        (
            "maxpool",
            _time(lambda: ops.maxpool3d(x), repeats),
            _time(lambda: ops.maxpool3d_backward(dout, cache), repeats),
        )
    )
    return rows


def bench_train_step(batch, repeats):
    cfg = bb.BackboneConfig()
    rng = np.random.default_rng(0)
    params = bb.init_params(cfg, rng)
    buffers = bb.init_buffers(cfg)
    clips = rng.random((batch, 8, 64, 64, 3)).astype(np.float32)
    labels = rng.integers(0, cfg.num_classes, batch)
    t_attn, h_attn, w_attn = bb.attention_map_dims(cfg)
    heat = rng.random((batch, t_attn, h_attn, w_attn)).astype(np.float32)
    heat /= heat.sum(axis=(-2, -1), keepdims=True)

    def step():
        logits, attn, cache = bb.forward(
            params, buffers, clips, cfg, train=True, rng=rng
        )
        _, dlogits = softmax_cross_entropy(logits, labels)
        _, c_kl = attention_loss(attn, heat)
        bb.backward(dlogits, attention_loss_backward(c_kl, 1.0), cache)

    return _time(step, repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=12)
    parser.add_argument("--repeats", type=int, default=10)
    args = parser.parse_args()

    results = {}
    for name in ("numpy", "numba"):
        try:
            backend.set_backend(name)
        except Exception as exc:  # numba may be unavailable
            print(f"skipping {name}: {exc}")
            continue
        print(f"\nbackend = {name} (batch {args.batch})")
        print(f"{'layer':<10} {'fwd ms':>9} {'bwd ms':>9}")
        for layer, fwd, bwd in bench_kernels(args.batch, args.repeats):
            print(f"{layer:<10} {fwd * 1e3:>9.2f} {bwd * 1e3:>9.2f}")
        step = bench_train_step(args.batch, max(args.repeats // 2, 3))
        results[name] = step
        print(f"full train step: {step * 1e3:.1f} ms")
    if len(results) == 2:
        ratio = results["numpy"] / results["numba"]
        print(f"\nnumba speedup over numpy on a full step: {ratio:.2f}x")


if __name__ == "__main__":
    main()
