#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--size 512] [--repeat 5]

Times each kernel on the same inputs for both backends and reports the
speedup of the compiled extension, plus an end-to-end per-image extraction
comparison driven through each backend.
"""

import argparse
import time

import numpy as np

from kira._kernels import pure

try:
    from kira._kernels import _native as native
except ImportError:
    native = None


def timeit(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if native is None:
        raise SystemExit("compiled extension not built; run "
                         "`python3 setup.py build_ext --inplace` first")

    n = args.size
    rng = np.random.default_rng(0)
    img = np.ascontiguousarray(100.0 + rng.normal(0.0, 5.0, (n, n)))
    raw = (img.astype(">f4")).tobytes()
    no_mask = np.zeros((1, 1), dtype=np.uint8)
    mesh_n = (n + 63) // 64
    mesh = np.ascontiguousarray(rng.normal(100.0, 1.0, (mesh_n, mesh_n)))
    rms_mesh = np.ascontiguousarray(rng.uniform(4.0, 6.0, (mesh_n, mesh_n)))
    jx0 = np.minimum(np.arange(n, dtype=np.int32) // 64, mesh_n - 1)
    jx1 = np.minimum(jx0 + 1, mesh_n - 1).astype(np.int32)
    wx = rng.random(n)
    idx = (jx0, jx1, wx, jx0, jx1, wx)

    det = native.detect_sub(img, mesh, rms_mesh, *idx, 1.0, no_mask, False)
    labels, ncomp, pys, pxs = native.label_components(det, 8)
    nap = 200
    xs = rng.uniform(20, n - 20, nap)
    ys = rng.uniform(20, n - 20, nap)
    rs = rng.uniform(2.0, 6.0, nap)
    b_ax = rng.uniform(1.5, 3.0, nap)
    a_ax = b_ax * rng.uniform(1.0, 2.0, nap)
    th = rng.uniform(-np.pi / 2, np.pi / 2, nap)
    ct, st = np.cos(th), np.sin(th)
    cxx = ct ** 2 / a_ax ** 2 + st ** 2 / b_ax ** 2
    cyy = st ** 2 / a_ax ** 2 + ct ** 2 / b_ax ** 2
    cxy = 2 * ct * st * (1 / a_ax ** 2 - 1 / b_ax ** 2)
    det4 = cxx * cyy - cxy ** 2 / 4
    ex, ey = np.sqrt(cyy / det4), np.sqrt(cxx / det4)
    var = np.ascontiguousarray(rng.uniform(0.5, 2.0, (n, n)))

    cases = [
        ("decode_pixels", lambda m: m.decode_pixels(raw, -32, 1.0, 0.0, False,
                                                    0, n, n)),
        ("cell_stats", lambda m: m.cell_stats(img, no_mask, 64, 3.0, 5)),
        ("expand_subtract", lambda m: m.expand_subtract(img, mesh, *idx)),
        ("detect_sub", lambda m: m.detect_sub(img, mesh, rms_mesh, *idx, 1.0,
                                              no_mask, False)),
        ("label_components", lambda m: m.label_components(det, 8)),
        ("measure_components", lambda m: m.measure_components(
            img, labels, ncomp, no_mask, False, pys, pxs)),
        ("circle_sum", lambda m: m.circle_sum(img, var, True, xs, ys, rs, 5)),
        ("ellipse_sum", lambda m: m.ellipse_sum(img, var, True, xs, ys, a_ax,
                                                ex, ey, cxx, cyy, cxy, 1.0, 5)),
        ("kron_radius", lambda m: m.kron_radius_kernel(img, xs, ys, cxx, cyy,
                                                       cxy, ex, ey, 6.0)),
    ]

    print(f"{'kernel':<20}{'pure (ms)':>12}{'native (ms)':>13}{'speedup':>9}")
    for name, call in cases:
        tp = timeit(lambda: call(pure), args.repeat) * 1000
        tn = timeit(lambda: call(native), args.repeat) * 1000
        print(f"{name:<20}{tp:>12.2f}{tn:>13.2f}{tp / tn:>8.1f}x")

    # end-to-end: one synthetic image through parse + background + extraction
    import kira._kernels as dispatch
    from kira.fits import synth_image, write_fits, parse_fits
    from kira.pipeline import PipelineConfig, image_objects
    sources = [(float(rng.uniform(20, n - 20)), float(rng.uniform(20, n - 20)),
                float(rng.uniform(300, 3000)), float(rng.uniform(1.5, 3.0)))
               for _ in range(max(25, n // 4))]
    data = write_fits(synth_image(n, n, background=100.0, sources=sources,
                                  noise_sigma=5.0, noise_seed=1))
    cfg = PipelineConfig(input_dir=".", thresh_sigma=4.0)

    def task():
        image_objects(parse_fits(data).pixels, cfg)

    timings = {}
    for name, impl in (("pure", pure), ("native", native)):
        saved = dispatch._impl
        try:
            for attr in ("decode_pixels", "cell_stats", "bilinear_expand",
                         "expand_subtract", "detect_above", "detect_sub",
                         "label_components", "measure_components",
                         "measure_components_sub", "circle_sum", "ellipse_sum",
                         "kron_radius_kernel", "mask_ellipse_kernel"):
                setattr(dispatch, attr, getattr(impl, attr))
            timings[name] = timeit(task, args.repeat) * 1000
        finally:
            for attr in ("decode_pixels", "cell_stats", "bilinear_expand",
                         "expand_subtract", "detect_above", "detect_sub",
                         "label_components", "measure_components",
                         "measure_components_sub", "circle_sum", "ellipse_sum",
                         "kron_radius_kernel", "mask_ellipse_kernel"):
                setattr(dispatch, attr, getattr(saved, attr))
    print(f"{'image task':<20}{timings['pure']:>12.2f}{timings['native']:>13.2f}"
          f"{timings['pure'] / timings['native']:>8.1f}x")


if __name__ == "__main__":
    main()
