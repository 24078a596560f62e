"""Compiled extension vs pure-Python fallback: same inputs, same results."""

import numpy as np
import pytest

from kira._kernels import pure

native = pytest.importorskip("kira._kernels._native")

RNG = np.random.default_rng(17)
IMG = np.ascontiguousarray(100.0 + RNG.normal(0.0, 5.0, (96, 96)))
IMG[3, 3] = np.nan
NO_MASK = np.zeros((1, 1), dtype=np.uint8)


def test_decode_parity():
    for dt, bitpix in ((">u1", 8), (">i2", 16), (">i4", 32), (">f4", -32), (">f8", -64)):
        stored = (RNG.normal(0, 50, 64)).astype(dt)
        raw = stored.tobytes()
        a = pure.decode_pixels(raw, bitpix, 1.5, 10.0, False, 0, 8, 8)
        b = native.decode_pixels(raw, bitpix, 1.5, 10.0, False, 0, 8, 8)
        np.testing.assert_array_equal(a, b)
    stored = np.array([7, -9, 7], dtype=">i2")
    a = pure.decode_pixels(stored.tobytes(), 16, 1.0, 0.0, True, 7, 3, 1)
    b = native.decode_pixels(stored.tobytes(), 16, 1.0, 0.0, True, 7, 3, 1)
    np.testing.assert_array_equal(a, b)


def test_cell_stats_parity():
    la, ra, ca = pure.cell_stats(IMG, NO_MASK, 32, 3.0, 5)
    lb, rb, cb = native.cell_stats(IMG, NO_MASK, 32, 3.0, 5)
    np.testing.assert_allclose(la, lb, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(ra, rb, rtol=1e-9, atol=1e-9)
    np.testing.assert_array_equal(ca, cb)
    mask = (RNG.random((96, 96)) < 0.2).astype(np.uint8)
    la, ra, ca = pure.cell_stats(IMG, mask, 32, 3.0, 5)
    lb, rb, cb = native.cell_stats(IMG, mask, 32, 3.0, 5)
    np.testing.assert_allclose(la, lb, rtol=1e-9, atol=1e-9)
    np.testing.assert_array_equal(ca, cb)


def _interp_args():
    jx0 = np.arange(96, dtype=np.int32) // 32
    jx1 = np.minimum(jx0 + 1, 2).astype(np.int32)
    wx = RNG.random(96)
    return jx0, jx1, wx


def test_bilinear_parity_exact():
    mesh = np.ascontiguousarray(RNG.normal(0, 1, (3, 3)))
    rms = np.ascontiguousarray(RNG.uniform(0.5, 2.0, (3, 3)))
    jx0, jx1, wx = _interp_args()
    jy0, jy1, wy = _interp_args()
    idx = (jx0, jx1, wx, jy0, jy1, wy)
    a = pure.bilinear_expand(mesh, *idx)
    b = native.bilinear_expand(mesh, *idx)
    np.testing.assert_array_equal(a, b)
    sa = pure.expand_subtract(IMG, mesh, *idx)
    sb = native.expand_subtract(IMG, mesh, *idx)
    np.testing.assert_array_equal(sa, sb)
    da = pure.detect_above(IMG, mesh, *idx, 3.0, NO_MASK, False)
    db = native.detect_above(IMG, mesh, *idx, 3.0, NO_MASK, False)
    np.testing.assert_array_equal(da, db)
    fa = pure.detect_sub(IMG, mesh, rms, *idx, 3.0, NO_MASK, False)
    fb = native.detect_sub(IMG, mesh, rms, *idx, 3.0, NO_MASK, False)
    np.testing.assert_array_equal(fa, fb)


def test_label_and_measure_parity():
    det = np.ascontiguousarray((IMG > 106).astype(np.uint8))
    for conn in (4, 8):
        la, na, ya, xa = pure.label_components(det, conn)
        lb, nb, yb, xb = native.label_components(det, conn)
        assert na == nb
        np.testing.assert_array_equal(la, lb)
        np.testing.assert_array_equal(ya, yb)
        np.testing.assert_array_equal(xa, xb)
    labels, n, pys, pxs = native.label_components(det, 8)
    mask = np.zeros_like(det)
    mask[40:50, :] = 1
    outs_a = pure.measure_components(IMG, labels, n, mask, True, pys, pxs)
    outs_b = native.measure_components(IMG, labels, n, mask, True, pys, pxs)
    for a, b in zip(outs_a, outs_b):
        if a.dtype.kind == "f":
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        else:
            np.testing.assert_array_equal(a, b)


def test_measure_sub_parity_and_equivalence():
    mesh = np.ascontiguousarray(RNG.normal(0, 1, (3, 3)))
    jx0, jx1, wx = _interp_args()
    jy0, jy1, wy = _interp_args()
    idx = (jx0, jx1, wx, jy0, jy1, wy)
    det = np.ascontiguousarray((IMG > 106).astype(np.uint8))
    labels, n, pys, pxs = native.label_components(det, 8)
    outs_a = pure.measure_components_sub(IMG, mesh, *idx, labels, n,
                                         NO_MASK, False, pys, pxs)
    outs_b = native.measure_components_sub(IMG, mesh, *idx, labels, n,
                                           NO_MASK, False, pys, pxs)
    for a, b in zip(outs_a, outs_b):
        if a.dtype.kind == "f":
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        else:
            np.testing.assert_array_equal(a, b)
    # fused path == materialized subtraction, bit for bit
    sub = native.expand_subtract(IMG, mesh, *idx)
    outs_c = native.measure_components(sub, labels, n, NO_MASK, False, pys, pxs)
    for b, c in zip(outs_b, outs_c):
        np.testing.assert_array_equal(b, c)


def test_photometry_parity():
    n = 40
    xs = RNG.uniform(8, 88, n)
    ys = RNG.uniform(8, 88, n)
    rs = RNG.uniform(0.5, 6.0, n)
    var = np.ascontiguousarray(RNG.uniform(0.5, 2.0, IMG.shape))
    fa, ea, _ = pure.circle_sum(IMG, var, True, xs, ys, rs, 5)
    fb, eb, _ = native.circle_sum(IMG, var, True, xs, ys, rs, 5)
    np.testing.assert_allclose(fa, fb, rtol=1e-9)
    np.testing.assert_allclose(ea, eb, rtol=1e-9)

    b_ax = RNG.uniform(1.0, 3.0, n)
    a_ax = b_ax * RNG.uniform(1.0, 2.5, n)
    th = RNG.uniform(-np.pi / 2, np.pi / 2, n)
    ct, st = np.cos(th), np.sin(th)
    cxx = ct ** 2 / a_ax ** 2 + st ** 2 / b_ax ** 2
    cyy = st ** 2 / a_ax ** 2 + ct ** 2 / b_ax ** 2
    cxy = 2 * ct * st * (1 / a_ax ** 2 - 1 / b_ax ** 2)
    det4 = cxx * cyy - cxy ** 2 / 4
    ex = np.sqrt(cyy / det4)
    ey = np.sqrt(cxx / det4)
    fa, ea, _ = pure.ellipse_sum(IMG, var, True, xs, ys, a_ax, ex, ey,
                                 cxx, cyy, cxy, 1.5, 5)
    fb, eb, _ = native.ellipse_sum(IMG, var, True, xs, ys, a_ax, ex, ey,
                                   cxx, cyy, cxy, 1.5, 5)
    np.testing.assert_allclose(fa, fb, rtol=1e-9)
    np.testing.assert_allclose(ea, eb, rtol=1e-9)

    ka, fla = pure.kron_radius_kernel(IMG, xs, ys, cxx, cyy, cxy, ex, ey, 6.0)
    kb, flb = native.kron_radius_kernel(IMG, xs, ys, cxx, cyy, cxy, ex, ey, 6.0)
    np.testing.assert_allclose(ka, kb, rtol=1e-9)
    np.testing.assert_array_equal(fla, flb)

    ma = np.zeros(IMG.shape, dtype=np.uint8)
    mb = np.zeros(IMG.shape, dtype=np.uint8)
    pure.mask_ellipse_kernel(ma, xs, ys, cxx, cyy, cxy, ex, ey, 2.0)
    native.mask_ellipse_kernel(mb, xs, ys, cxx, cyy, cxy, ex, ey, 2.0)
    np.testing.assert_array_equal(ma, mb)


def test_backend_selection_env(monkeypatch):
    import importlib
    import kira._kernels as K
    monkeypatch.setenv("KIRA_PURE", "1")
    mod = importlib.reload(K)
    assert mod.backend() == "pure"
    monkeypatch.delenv("KIRA_PURE")
    mod = importlib.reload(K)
    assert mod.backend() == "native"
