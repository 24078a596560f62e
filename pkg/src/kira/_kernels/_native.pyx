# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.

Mirror of ``pure.py``. All hot loops release the GIL so the engine's
in-process worker slots can run extraction tasks in parallel threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite, NAN
from libc.stdlib cimport qsort

cnp.import_array()

BACKEND = "native"

DEF HALF_DIAG = 0.7071067811865476


cdef union _U32:
    unsigned int u
    float f

cdef union _U64:
    unsigned long long u
    double f


def decode_pixels(raw, int bitpix, double bscale, double bzero,
                  bint has_blank, long long blank, int width, int height):
    """Big-endian payload -> float64 image in physical units."""
    cdef const unsigned char[::1] buf = raw
    out_arr = np.empty((height, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n = <Py_ssize_t>width * height
    cdef Py_ssize_t i, j
    cdef long long v
    cdef double p
    cdef _U32 u32
    cdef _U64 u64
    cdef double* flat = &out[0, 0]
    with nogil:
        if bitpix == 8:
            for i in range(n):
                v = buf[i]
                p = bzero + bscale * <double>v
                if has_blank and v == blank:
                    p = NAN
                flat[i] = p
        elif bitpix == 16:
            for i in range(n):
                j = 2 * i
                v = <short>((buf[j] << 8) | buf[j + 1])
                p = bzero + bscale * <double>v
                if has_blank and v == blank:
                    p = NAN
                flat[i] = p
        elif bitpix == 32:
            for i in range(n):
                j = 4 * i
                v = <int>((<unsigned int>buf[j] << 24) | (<unsigned int>buf[j + 1] << 16) |
                          (<unsigned int>buf[j + 2] << 8) | buf[j + 3])
                p = bzero + bscale * <double>v
                if has_blank and v == blank:
                    p = NAN
                flat[i] = p
        elif bitpix == -32:
            for i in range(n):
                j = 4 * i
                u32.u = ((<unsigned int>buf[j] << 24) | (<unsigned int>buf[j + 1] << 16) |
                         (<unsigned int>buf[j + 2] << 8) | buf[j + 3])
                flat[i] = bzero + bscale * <double>u32.f
        else:  # -64
            for i in range(n):
                j = 8 * i
                u64.u = ((<unsigned long long>buf[j] << 56) |
                         (<unsigned long long>buf[j + 1] << 48) |
                         (<unsigned long long>buf[j + 2] << 40) |
                         (<unsigned long long>buf[j + 3] << 32) |
                         (<unsigned long long>buf[j + 4] << 24) |
                         (<unsigned long long>buf[j + 5] << 16) |
                         (<unsigned long long>buf[j + 6] << 8) |
                         <unsigned long long>buf[j + 7])
                flat[i] = bzero + bscale * u64.f
    return out_arr


cdef int _cmp_double(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*>a)[0]
    cdef double y = (<const double*>b)[0]
    if x < y:
        return -1
    elif x > y:
        return 1
    return 0


cdef double _mean(double* buf, Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += buf[i]
    return s / n


cdef double _std(double* buf, Py_ssize_t n, double mu) noexcept nogil:
    cdef double s = 0.0, d
    cdef Py_ssize_t i
    for i in range(n):
        d = buf[i] - mu
        s += d * d
    return sqrt(s / n)


def cell_stats(double[:, ::1] img, const unsigned char[:, ::1] mask,
               int cell_size, double clip_sigma, int clip_iters):
    """Sigma-clipped level/rms per mesh cell; see pure.py for the contract."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef bint has_mask = mask.shape[0] == h and mask.shape[1] == w
    cdef Py_ssize_t mh = (h + cell_size - 1) // cell_size
    cdef Py_ssize_t mw = (w + cell_size - 1) // cell_size
    levels_arr = np.full((mh, mw), np.nan)
    rms_arr = np.full((mh, mw), np.nan)
    counts_arr = np.zeros((mh, mw), dtype=np.int64)
    scratch_arr = np.empty(cell_size * cell_size, dtype=np.float64)
    cdef double[:, ::1] levels = levels_arr
    cdef double[:, ::1] rms = rms_arr
    cdef long long[:, ::1] counts = counts_arr
    cdef double[::1] scratch = scratch_arr
    cdef double* buf
    cdef Py_ssize_t jy, jx, y, x, y0, y1, x0, x1, n, n0, k, it
    cdef double mu, sd, level, med, v
    with nogil:
        buf = &scratch[0]
        for jy in range(mh):
            for jx in range(mw):
                y0 = jy * cell_size
                y1 = min(y0 + cell_size, h)
                x0 = jx * cell_size
                x1 = min(x0 + cell_size, w)
                n = 0
                for y in range(y0, y1):
                    for x in range(x0, x1):
                        v = img[y, x]
                        if isfinite(v) and (not has_mask or mask[y, x] == 0):
                            buf[n] = v
                            n += 1
                if n == 0:
                    continue
                n0 = n
                for it in range(clip_iters):
                    mu = _mean(buf, n)
                    sd = _std(buf, n, mu)
                    if sd == 0.0:
                        break
                    k = 0
                    for y in range(n):
                        if fabs(buf[y] - mu) <= clip_sigma * sd:
                            buf[k] = buf[y]
                            k += 1
                    if k == n or k == 0:
                        break
                    n = k
                mu = _mean(buf, n)
                sd = _std(buf, n, mu)
                if (n0 - n) > 0.2 * n0:
                    qsort(buf, n, sizeof(double), _cmp_double)
                    if n % 2 == 1:
                        med = buf[n // 2]
                    else:
                        med = (buf[n // 2 - 1] + buf[n // 2]) / 2.0
                    level = 2.5 * med - 1.5 * mu
                else:
                    level = mu
                levels[jy, jx] = level
                rms[jy, jx] = sd
                counts[jy, jx] = n
    return levels_arr, rms_arr, counts_arr


def bilinear_expand(double[:, ::1] mesh,
                    const int[::1] jx0, const int[::1] jx1, const double[::1] wx,
                    const int[::1] jy0, const int[::1] jy1, const double[::1] wy):
    """Expand a mesh to full resolution with precomputed indices/weights."""
    cdef Py_ssize_t h = jy0.shape[0], w = jx0.shape[0]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x
    cdef double a, b, fy
    with nogil:
        for y in range(h):
            fy = wy[y]
            for x in range(w):
                a = (1.0 - wx[x]) * mesh[jy0[y], jx0[x]] + wx[x] * mesh[jy0[y], jx1[x]]
                b = (1.0 - wx[x]) * mesh[jy1[y], jx0[x]] + wx[x] * mesh[jy1[y], jx1[x]]
                out[y, x] = (1.0 - fy) * a + fy * b
    return out_arr


def expand_subtract(double[:, ::1] img, double[:, ::1] mesh,
                    const int[::1] jx0, const int[::1] jx1, const double[::1] wx,
                    const int[::1] jy0, const int[::1] jy1, const double[::1] wy):
    """img minus the expanded mesh, in one pass."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x
    cdef double a, b, fy
    with nogil:
        for y in range(h):
            fy = wy[y]
            for x in range(w):
                a = (1.0 - wx[x]) * mesh[jy0[y], jx0[x]] + wx[x] * mesh[jy0[y], jx1[x]]
                b = (1.0 - wx[x]) * mesh[jy1[y], jx0[x]] + wx[x] * mesh[jy1[y], jx1[x]]
                out[y, x] = img[y, x] - ((1.0 - fy) * a + fy * b)
    return out_arr


def detect_above(double[:, ::1] img, double[:, ::1] mesh,
                 const int[::1] jx0, const int[::1] jx1, const double[::1] wx,
                 const int[::1] jy0, const int[::1] jy1, const double[::1] wy,
                 double k, const unsigned char[:, ::1] mask, bint has_mask):
    """Detection map: img > k * expanded(mesh), excluding masked pixels."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    det_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] det = det_arr
    cdef Py_ssize_t y, x
    cdef double a, b, fy
    with nogil:
        for y in range(h):
            fy = wy[y]
            for x in range(w):
                if has_mask and mask[y, x] != 0:
                    continue
                a = (1.0 - wx[x]) * mesh[jy0[y], jx0[x]] + wx[x] * mesh[jy0[y], jx1[x]]
                b = (1.0 - wx[x]) * mesh[jy1[y], jx0[x]] + wx[x] * mesh[jy1[y], jx1[x]]
                if img[y, x] > k * ((1.0 - fy) * a + fy * b):
                    det[y, x] = 1
    return det_arr


def detect_sub(double[:, ::1] img, double[:, ::1] levels, double[:, ::1] rms,
               const int[::1] jx0, const int[::1] jx1, const double[::1] wx,
               const int[::1] jy0, const int[::1] jy1, const double[::1] wy,
               double k, const unsigned char[:, ::1] mask, bint has_mask):
    """Detection map of (img - expanded(levels)) > k * expanded(rms).

    Single pass; bit-identical to subtracting and thresholding separately.
    """
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    det_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] det = det_arr
    cdef Py_ssize_t y, x
    cdef double a, b, fy, sub_v, rms_v
    with nogil:
        for y in range(h):
            fy = wy[y]
            for x in range(w):
                if has_mask and mask[y, x] != 0:
                    continue
                a = (1.0 - wx[x]) * levels[jy0[y], jx0[x]] + wx[x] * levels[jy0[y], jx1[x]]
                b = (1.0 - wx[x]) * levels[jy1[y], jx0[x]] + wx[x] * levels[jy1[y], jx1[x]]
                sub_v = img[y, x] - ((1.0 - fy) * a + fy * b)
                a = (1.0 - wx[x]) * rms[jy0[y], jx0[x]] + wx[x] * rms[jy0[y], jx1[x]]
                b = (1.0 - wx[x]) * rms[jy1[y], jx0[x]] + wx[x] * rms[jy1[y], jx1[x]]
                rms_v = (1.0 - fy) * a + fy * b
                if sub_v > k * rms_v:
                    det[y, x] = 1
    return det_arr


def label_components(unsigned char[:, ::1] det, int connectivity):
    """Flood-fill labeling; see pure.py for the contract.

    Returns (labels, n, ys, xs) with labeled coordinates in discovery order.
    """
    cdef Py_ssize_t h = det.shape[0], w = det.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    cdef Py_ssize_t ndet = 0
    cdef Py_ssize_t y, x, sy, sx, ny, nx, top, k, noff, pos
    with nogil:
        for y in range(h):
            for x in range(w):
                if det[y, x] != 0:
                    ndet += 1
    ys_arr = np.empty(ndet, dtype=np.int64)
    xs_arr = np.empty(ndet, dtype=np.int64)
    stack_arr = np.empty(max(ndet, 1), dtype=np.int64)
    cdef long long[::1] cys = ys_arr
    cdef long long[::1] cxs = xs_arr
    cdef long long[::1] stack = stack_arr
    cdef int n = 0
    cdef long long code
    cdef int offx[8]
    cdef int offy[8]
    offx[0] = -1; offy[0] = -1
    offx[1] = 0;  offy[1] = -1
    offx[2] = 1;  offy[2] = -1
    offx[3] = -1; offy[3] = 0
    offx[4] = 1;  offy[4] = 0
    offx[5] = -1; offy[5] = 1
    offx[6] = 0;  offy[6] = 1
    offx[7] = 1;  offy[7] = 1
    if connectivity == 8:
        noff = 8
    else:
        noff = 4
        offx[0] = 0;  offy[0] = -1
        offx[1] = -1; offy[1] = 0
        offx[2] = 1;  offy[2] = 0
        offx[3] = 0;  offy[3] = 1
    pos = 0
    if ndet > 0:
        with nogil:
            for y in range(h):
                for x in range(w):
                    if det[y, x] == 0 or labels[y, x] != 0:
                        continue
                    n += 1
                    labels[y, x] = n
                    cys[pos] = y
                    cxs[pos] = x
                    pos += 1
                    top = 0
                    stack[top] = y * w + x
                    top += 1
                    while top > 0:
                        top -= 1
                        code = stack[top]
                        sy = code // w
                        sx = code % w
                        for k in range(noff):
                            nx = sx + offx[k]
                            ny = sy + offy[k]
                            if 0 <= nx < w and 0 <= ny < h and det[ny, nx] != 0 and labels[ny, nx] == 0:
                                labels[ny, nx] = n
                                cys[pos] = ny
                                cxs[pos] = nx
                                pos += 1
                                stack[top] = ny * w + nx
                                top += 1
    return labels_arr, n, ys_arr, xs_arr


def measure_components(double[:, ::1] img, int[:, ::1] labels, int ncomp,
                       const unsigned char[:, ::1] mask, bint has_mask,
                       const long long[::1] pys, const long long[::1] pxs):
    """Per-component stats over the labeled pixel list (see pure.py)."""
    return _measure(img, None, None, None, None, None, None, None,
                    labels, ncomp, mask, has_mask, pys, pxs, False)


def measure_components_sub(double[:, ::1] img, double[:, ::1] levels,
                           const int[::1] jx0, const int[::1] jx1,
                           const double[::1] wx,
                           const int[::1] jy0, const int[::1] jy1,
                           const double[::1] wy,
                           int[:, ::1] labels, int ncomp,
                           const unsigned char[:, ::1] mask, bint has_mask,
                           const long long[::1] pys, const long long[::1] pxs):
    """measure_components over (img - expanded(levels)), subtracting on the
    fly per labeled pixel (bit-identical to the materialized path)."""
    return _measure(img, levels, jx0, jx1, wx, jy0, jy1, wy,
                    labels, ncomp, mask, has_mask, pys, pxs, True)


cdef _measure(double[:, ::1] img, levels_obj, jx0_obj, jx1_obj, wx_obj,
              jy0_obj, jy1_obj, wy_obj, int[:, ::1] labels, int ncomp,
              const unsigned char[:, ::1] mask, bint has_mask,
              const long long[::1] pys, const long long[::1] pxs,
              bint subtract):
    npix_arr = np.zeros(ncomp, dtype=np.int64)
    flux_arr = np.zeros(ncomp)
    sx_arr = np.zeros(ncomp)
    sy_arr = np.zeros(ncomp)
    sxx_arr = np.zeros(ncomp)
    syy_arr = np.zeros(ncomp)
    sxy_arr = np.zeros(ncomp)
    peak_arr = np.full(ncomp, -np.inf)
    touches_arr = np.zeros(ncomp, dtype=np.uint8)
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    xmin_arr = np.full(ncomp, w, dtype=np.int64)
    xmax_arr = np.full(ncomp, -1, dtype=np.int64)
    ymin_arr = np.full(ncomp, h, dtype=np.int64)
    ymax_arr = np.full(ncomp, -1, dtype=np.int64)
    if ncomp == 0:
        return (npix_arr, flux_arr, sx_arr, sy_arr, sxx_arr, syy_arr, sxy_arr,
                peak_arr, xmin_arr, xmax_arr, ymin_arr, ymax_arr, touches_arr)

    cdef double[:, ::1] levels = levels_obj if subtract else img
    cdef const int[::1] jx0 = jx0_obj if subtract else None
    cdef const int[::1] jx1 = jx1_obj if subtract else None
    cdef const double[::1] wx = wx_obj if subtract else None
    cdef const int[::1] jy0 = jy0_obj if subtract else None
    cdef const int[::1] jy1 = jy1_obj if subtract else None
    cdef const double[::1] wy = wy_obj if subtract else None

    cdef long long[::1] npix = npix_arr
    cdef double[::1] flux = flux_arr
    cdef double[::1] sx = sx_arr
    cdef double[::1] sy = sy_arr
    cdef double[::1] sxx = sxx_arr
    cdef double[::1] syy = syy_arr
    cdef double[::1] sxy = sxy_arr
    cdef double[::1] peak = peak_arr
    cdef long long[::1] xmin = xmin_arr
    cdef long long[::1] xmax = xmax_arr
    cdef long long[::1] ymin = ymin_arr
    cdef long long[::1] ymax = ymax_arr
    cdef unsigned char[::1] touches = touches_arr
    cdef Py_ssize_t y, x, k2, nx, ny, i, npts
    cdef int k
    cdef double v, rx, ry, a, b, fy
    cdef int offx[8]
    cdef int offy[8]
    offx[0] = -1; offy[0] = -1
    offx[1] = 0;  offy[1] = -1
    offx[2] = 1;  offy[2] = -1
    offx[3] = -1; offy[3] = 0
    offx[4] = 1;  offy[4] = 0
    offx[5] = -1; offy[5] = 1
    offx[6] = 0;  offy[6] = 1
    offx[7] = 1;  offy[7] = 1
    npts = pys.shape[0]
    with nogil:
        for i in range(npts):
            y = pys[i]
            x = pxs[i]
            k = labels[y, x] - 1
            if x < xmin[k]:
                xmin[k] = x
            if x > xmax[k]:
                xmax[k] = x
            if y < ymin[k]:
                ymin[k] = y
            if y > ymax[k]:
                ymax[k] = y
        for i in range(npts):
            y = pys[i]
            x = pxs[i]
            k = labels[y, x] - 1
            v = img[y, x]
            if subtract:
                fy = wy[y]
                a = (1.0 - wx[x]) * levels[jy0[y], jx0[x]] + wx[x] * levels[jy0[y], jx1[x]]
                b = (1.0 - wx[x]) * levels[jy1[y], jx0[x]] + wx[x] * levels[jy1[y], jx1[x]]
                v = v - ((1.0 - fy) * a + fy * b)
            rx = <double>(x - xmin[k])
            ry = <double>(y - ymin[k])
            npix[k] += 1
            flux[k] += v
            sx[k] += v * rx
            sy[k] += v * ry
            sxx[k] += v * rx * rx
            syy[k] += v * ry * ry
            sxy[k] += v * rx * ry
            if v > peak[k]:
                peak[k] = v
            if has_mask and touches[k] == 0:
                for k2 in range(8):
                    nx = x + offx[k2]
                    ny = y + offy[k2]
                    if 0 <= nx < w and 0 <= ny < h and mask[ny, nx] != 0:
                        touches[k] = 1
                        break
    return (npix_arr, flux_arr, sx_arr, sy_arr, sxx_arr, syy_arr, sxy_arr,
            peak_arr, xmin_arr, xmax_arr, ymin_arr, ymax_arr, touches_arr)


cdef inline double _clip01(double x) noexcept nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


def circle_sum(double[:, ::1] img, double[:, ::1] var, bint has_var,
               double[::1] xs, double[::1] ys, double[::1] rs, int subpix):
    """Aperture sums over circles (coverage-weighted sub-sampling, see pure.py)."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t n = xs.shape[0]
    flux_arr = np.zeros(n)
    err2_arr = np.zeros(n)
    cdef double[::1] flux = flux_arr
    cdef double[::1] err2 = err2_arr
    cdef double nsub2 = <double>(subpix * subpix)
    cdef double band = HALF_DIAG + HALF_DIAG / subpix
    cdef Py_ssize_t i, px, py, x_lo, x_hi, y_lo, y_hi, sk, sl
    cdef double cx, cy, r, dx, dy, d, v, frac, ox, oy, sdx, sdy, wsum, dist
    with nogil:
        for i in range(n):
            cx = xs[i]
            cy = ys[i]
            r = rs[i]
            if r <= 0.0:
                continue
            x_lo = _clip_lo(cx - r - 0.5, w)
            x_hi = _clip_hi(cx + r + 0.5, w)
            y_lo = _clip_lo(cy - r - 0.5, h)
            y_hi = _clip_hi(cy + r + 0.5, h)
            if x_lo > x_hi or y_lo > y_hi:
                continue
            for py in range(y_lo, y_hi + 1):
                dy = <double>py - cy
                for px in range(x_lo, x_hi + 1):
                    v = img[py, px]
                    if not isfinite(v):
                        continue
                    dx = <double>px - cx
                    d = sqrt(dx * dx + dy * dy)
                    if r - d >= band:
                        frac = 1.0
                    elif d - r < band:
                        wsum = 0.0
                        for sk in range(subpix):
                            oy = (<double>sk + 0.5) / subpix - 0.5
                            sdy = (<double>py + oy) - cy
                            for sl in range(subpix):
                                ox = (<double>sl + 0.5) / subpix - 0.5
                                sdx = (<double>px + ox) - cx
                                dist = r - sqrt(sdx * sdx + sdy * sdy)
                                wsum += _clip01(0.5 + dist * subpix)
                        if wsum == 0.0:
                            continue
                        frac = wsum / nsub2
                    else:
                        continue
                    flux[i] += v * frac
                    if has_var:
                        err2[i] += var[py, px] * frac
    return flux_arr, np.sqrt(err2_arr), None


cdef inline Py_ssize_t _clip_lo(double v, Py_ssize_t n) noexcept nogil:
    # ceil(v) clamped to >= 0
    cdef Py_ssize_t lo = <Py_ssize_t>v
    if (<double>lo) < v:
        lo += 1
    if lo < 0:
        lo = 0
    return lo


cdef inline Py_ssize_t _clip_hi(double v, Py_ssize_t n) noexcept nogil:
    # floor(v) clamped to <= n-1
    cdef Py_ssize_t hi = <Py_ssize_t>v
    if (<double>hi) > v:
        hi -= 1
    if hi > n - 1:
        hi = n - 1
    return hi


def ellipse_sum(double[:, ::1] img, double[:, ::1] var, bint has_var,
                double[::1] xs, double[::1] ys, double[::1] amax,
                double[::1] ext_x, double[::1] ext_y,
                double[::1] cxx, double[::1] cyy, double[::1] cxy,
                double r_scale, int subpix):
    """Aperture sums over ellipses cxx dx^2 + cyy dy^2 + cxy dx dy <= r_scale^2."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t n = xs.shape[0]
    flux_arr = np.zeros(n)
    err2_arr = np.zeros(n)
    cdef double[::1] flux = flux_arr
    cdef double[::1] err2 = err2_arr
    cdef double nsub2 = <double>(subpix * subpix)
    cdef double r2 = r_scale * r_scale
    cdef double band = HALF_DIAG + HALF_DIAG / subpix
    cdef Py_ssize_t i, px, py, x_lo, x_hi, y_lo, y_hi, sk, sl, ci
    cdef double cx, cy, qxx, qyy, qxy, reach, dx, dy, d, v, frac, ox, oy
    cdef double sdx, sdy, q, cdx, cdy, wsum, re, gx, gy, gn, dist
    cdef bint full
    with nogil:
        for i in range(n):
            cx = xs[i]
            cy = ys[i]
            qxx = cxx[i]
            qyy = cyy[i]
            qxy = cxy[i]
            reach = amax[i] * r_scale
            x_lo = _clip_lo(cx - ext_x[i] * r_scale - 0.5, w)
            x_hi = _clip_hi(cx + ext_x[i] * r_scale + 0.5, w)
            y_lo = _clip_lo(cy - ext_y[i] * r_scale - 0.5, h)
            y_hi = _clip_hi(cy + ext_y[i] * r_scale + 0.5, h)
            if x_lo > x_hi or y_lo > y_hi:
                continue
            for py in range(y_lo, y_hi + 1):
                dy = <double>py - cy
                for px in range(x_lo, x_hi + 1):
                    v = img[py, px]
                    if not isfinite(v):
                        continue
                    dx = <double>px - cx
                    d = sqrt(dx * dx + dy * dy)
                    if d - reach >= band:
                        continue
                    # full shortcut: all corners inside and center one band
                    # away from the boundary (first-order distance)
                    full = True
                    for ci in range(4):
                        cdx = dx - 0.5 if ci & 1 else dx + 0.5
                        cdy = dy - 0.5 if ci & 2 else dy + 0.5
                        q = qxx * cdx * cdx + qyy * cdy * cdy + qxy * cdx * cdy
                        if q > r2:
                            full = False
                            break
                    if full:
                        q = qxx * dx * dx + qyy * dy * dy + qxy * dx * dy
                        re = sqrt(q)
                        gx = 2.0 * qxx * dx + qxy * dy
                        gy = 2.0 * qyy * dy + qxy * dx
                        gn = sqrt(gx * gx + gy * gy)
                        if gn > 0.0 and (r_scale - re) * 2.0 * re / gn < band:
                            full = False
                    if full:
                        frac = 1.0
                    else:
                        wsum = 0.0
                        for sk in range(subpix):
                            oy = (<double>sk + 0.5) / subpix - 0.5
                            sdy = (<double>py + oy) - cy
                            for sl in range(subpix):
                                ox = (<double>sl + 0.5) / subpix - 0.5
                                sdx = (<double>px + ox) - cx
                                q = qxx * sdx * sdx + qyy * sdy * sdy + qxy * sdx * sdy
                                re = sqrt(q)
                                gx = 2.0 * qxx * sdx + qxy * sdy
                                gy = 2.0 * qyy * sdy + qxy * sdx
                                gn = sqrt(gx * gx + gy * gy)
                                if gn == 0.0:
                                    wsum += 1.0 if q < r2 else 0.0
                                else:
                                    dist = (r_scale - re) * 2.0 * re / gn
                                    wsum += _clip01(0.5 + dist * subpix)
                        if wsum == 0.0:
                            continue
                        frac = wsum / nsub2
                    flux[i] += v * frac
                    if has_var:
                        err2[i] += var[py, px] * frac
    return flux_arr, np.sqrt(err2_arr), None


def kron_radius_kernel(double[:, ::1] img, double[::1] xs, double[::1] ys,
                       double[::1] cxx, double[::1] cyy, double[::1] cxy,
                       double[::1] ext_x, double[::1] ext_y, double r_max):
    """Flux-weighted mean elliptical radius within elliptical radius r_max."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t n = xs.shape[0]
    kron_arr = np.zeros(n)
    flag_arr = np.zeros(n, dtype=np.int32)
    cdef double[::1] kron = kron_arr
    cdef int[::1] flag = flag_arr
    cdef double r2max = r_max * r_max
    cdef Py_ssize_t i, px, py, x_lo, x_hi, y_lo, y_hi
    cdef double cx, cy, dx, dy, q, v, num, den
    with nogil:
        for i in range(n):
            cx = xs[i]
            cy = ys[i]
            x_lo = _clip_lo(cx - ext_x[i] * r_max - 0.5, w)
            x_hi = _clip_hi(cx + ext_x[i] * r_max + 0.5, w)
            y_lo = _clip_lo(cy - ext_y[i] * r_max - 0.5, h)
            y_hi = _clip_hi(cy + ext_y[i] * r_max + 0.5, h)
            if x_lo > x_hi or y_lo > y_hi:
                flag[i] = 1
                continue
            num = 0.0
            den = 0.0
            for py in range(y_lo, y_hi + 1):
                dy = <double>py - cy
                for px in range(x_lo, x_hi + 1):
                    v = img[py, px]
                    if not isfinite(v):
                        continue
                    dx = <double>px - cx
                    q = cxx[i] * dx * dx + cyy[i] * dy * dy + cxy[i] * dx * dy
                    if q <= r2max:
                        v = fabs(v)
                        num += v * sqrt(q)
                        den += v
            if den > 0.0:
                kron[i] = num / den
            else:
                flag[i] = 1
    return kron_arr, flag_arr


def mask_ellipse_kernel(unsigned char[:, ::1] mask, double[::1] xs, double[::1] ys,
                        double[::1] cxx, double[::1] cyy, double[::1] cxy,
                        double[::1] ext_x, double[::1] ext_y, double r_scale):
    """Union pixels whose centers fall inside each ellipse into the mask."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef double r2 = r_scale * r_scale
    cdef Py_ssize_t i, px, py, x_lo, x_hi, y_lo, y_hi
    cdef double cx, cy, dx, dy, q
    with nogil:
        for i in range(xs.shape[0]):
            cx = xs[i]
            cy = ys[i]
            x_lo = _clip_lo(cx - ext_x[i] * r_scale - 0.5, w)
            x_hi = _clip_hi(cx + ext_x[i] * r_scale + 0.5, w)
            y_lo = _clip_lo(cy - ext_y[i] * r_scale - 0.5, h)
            y_hi = _clip_hi(cy + ext_y[i] * r_scale + 0.5, h)
            if x_lo > x_hi or y_lo > y_hi:
                continue
            for py in range(y_lo, y_hi + 1):
                dy = <double>py - cy
                for px in range(x_lo, x_hi + 1):
                    dx = <double>px - cx
                    q = cxx[i] * dx * dx + cyy[i] * dy * dy + cxy[i] * dx * dy
                    if q <= r2:
                        mask[py, px] = 1
