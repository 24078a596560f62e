"""Pure-Python (NumPy) kernels.

Fallback twin of the compiled extension in ``_native.pyx``. Both expose the
same functions with the same semantics; wrappers in the library normalize
arguments (dtype, contiguity, mask encoding) before calling either one, so the
two implementations may differ only in float summation order.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"

_HALF_DIAG = 0.7071067811865476  # max distance from pixel center to its corner


def decode_pixels(raw, bitpix, bscale, bzero, has_blank, blank, width, height):
    """Big-endian payload -> float64 image in physical units."""
    dtypes = {8: ">u1", 16: ">i2", 32: ">i4", -32: ">f4", -64: ">f8"}
    stored = np.frombuffer(raw, dtype=dtypes[bitpix], count=width * height)
    out = bzero + bscale * stored.astype(np.float64)
    if has_blank and bitpix > 0:
        out[stored == blank] = np.nan
    return out.reshape(height, width)


def cell_stats(img, mask, cell_size, clip_sigma, clip_iters):
    """Sigma-clipped level/rms per mesh cell.

    mask: uint8 matrix (1 = excluded), or a 1x1 sentinel meaning "no mask".
    NaN pixels are always excluded. Cells with no usable pixel get NaN
    level/rms and count 0.
    """
    h, w = img.shape
    has_mask = mask.shape == img.shape
    mh = (h + cell_size - 1) // cell_size
    mw = (w + cell_size - 1) // cell_size
    levels = np.full((mh, mw), np.nan)
    rms = np.full((mh, mw), np.nan)
    counts = np.zeros((mh, mw), dtype=np.int64)
    for jy in range(mh):
        for jx in range(mw):
            sl = (slice(jy * cell_size, (jy + 1) * cell_size),
                  slice(jx * cell_size, (jx + 1) * cell_size))
            usable = np.isfinite(img[sl])
            if has_mask:
                usable &= mask[sl] == 0
            vals = img[sl][usable]
            n0 = vals.size
            if n0 == 0:
                continue
            cur = vals
            for _ in range(clip_iters):
                mu = cur.mean()
                sd = cur.std()
                if sd == 0.0:
                    break
                keep = np.abs(cur - mu) <= clip_sigma * sd
                nk = int(keep.sum())
                if nk == cur.size or nk == 0:
                    break
                cur = cur[keep]
            mu = cur.mean()
            sd = cur.std()
            if (n0 - cur.size) > 0.2 * n0:
                levels[jy, jx] = 2.5 * np.median(cur) - 1.5 * mu
            else:
                levels[jy, jx] = mu
            rms[jy, jx] = sd
            counts[jy, jx] = cur.size
    return levels, rms, counts


def bilinear_expand(mesh, jx0, jx1, wx, jy0, jy1, wy):
    """Expand a mesh to full resolution with precomputed indices/weights."""
    m00 = mesh[jy0[:, None], jx0[None, :]]
    m01 = mesh[jy0[:, None], jx1[None, :]]
    m10 = mesh[jy1[:, None], jx0[None, :]]
    m11 = mesh[jy1[:, None], jx1[None, :]]
    wxr = wx[None, :]
    wyr = wy[:, None]
    return (1.0 - wyr) * ((1.0 - wxr) * m00 + wxr * m01) + \
        wyr * ((1.0 - wxr) * m10 + wxr * m11)


def expand_subtract(img, mesh, jx0, jx1, wx, jy0, jy1, wy):
    """img minus the expanded mesh, in one pass."""
    return img - bilinear_expand(mesh, jx0, jx1, wx, jy0, jy1, wy)


def detect_above(img, mesh, jx0, jx1, wx, jy0, jy1, wy, k, mask, has_mask):
    """Detection map: img > k * expanded(mesh), excluding masked pixels."""
    with np.errstate(invalid="ignore"):
        det = img > k * bilinear_expand(mesh, jx0, jx1, wx, jy0, jy1, wy)
    if has_mask:
        det &= mask == 0
    return np.ascontiguousarray(det).view(np.uint8)


def detect_sub(img, levels, rms, jx0, jx1, wx, jy0, jy1, wy, k, mask, has_mask):
    """Detection map of (img - expanded(levels)) > k * expanded(rms).

    Bit-identical to detect_above(expand_subtract(img, levels, ...), rms, ...).
    """
    sub = expand_subtract(img, levels, jx0, jx1, wx, jy0, jy1, wy)
    return detect_above(sub, rms, jx0, jx1, wx, jy0, jy1, wy, k, mask, has_mask)


_OFFS8 = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))
_OFFS4 = ((0, -1), (-1, 0), (1, 0), (0, 1))


def label_components(det, connectivity):
    """Flood-fill labeling of a uint8 detection map.

    Returns (labels, n, ys, xs): labels 0 for background and 1..n for
    components numbered in raster order of their first pixel, plus the labeled
    pixel coordinates in labeling (discovery) order.
    """
    h, w = det.shape
    labels = np.zeros((h, w), dtype=np.int32)
    offs = _OFFS8 if connectivity == 8 else _OFFS4
    n = 0
    cys = []
    cxs = []
    sys_, sxs = np.nonzero(det)
    for y0, x0 in zip(sys_.tolist(), sxs.tolist()):
        if labels[y0, x0]:
            continue
        n += 1
        stack = [(y0, x0)]
        labels[y0, x0] = n
        cys.append(y0)
        cxs.append(x0)
        while stack:
            y, x = stack.pop()
            for dx, dy in offs:
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and det[ny, nx] and not labels[ny, nx]:
                    labels[ny, nx] = n
                    cys.append(ny)
                    cxs.append(nx)
                    stack.append((ny, nx))
    return (labels, n, np.asarray(cys, dtype=np.int64),
            np.asarray(cxs, dtype=np.int64))


def measure_components(img, labels, ncomp, mask, has_mask, pys, pxs):
    """Per-component pixel statistics over the labeled pixel list (pys, pxs).

    First moments and second moments are accumulated relative to the component
    bounding-box origin so that integer image shifts reproduce bit-identical
    shape parameters. mask adjacency is only probed when has_mask is set.
    """
    npix = np.zeros(ncomp, dtype=np.int64)
    flux = np.zeros(ncomp)
    sx = np.zeros(ncomp)
    sy = np.zeros(ncomp)
    sxx = np.zeros(ncomp)
    syy = np.zeros(ncomp)
    sxy = np.zeros(ncomp)
    peak = np.full(ncomp, -np.inf)
    touches_mask = np.zeros(ncomp, dtype=np.uint8)
    if ncomp == 0:
        empty = np.zeros(0, dtype=np.int64)
        return (npix, flux, sx, sy, sxx, syy, sxy, peak,
                empty, empty, empty, empty, touches_mask)

    h, w = img.shape
    labs = labels[pys, pxs] - 1
    xmin = np.full(ncomp, w, dtype=np.int64)
    xmax = np.full(ncomp, -1, dtype=np.int64)
    ymin = np.full(ncomp, h, dtype=np.int64)
    ymax = np.full(ncomp, -1, dtype=np.int64)
    np.minimum.at(xmin, labs, pxs)
    np.maximum.at(xmax, labs, pxs)
    np.minimum.at(ymin, labs, pys)
    np.maximum.at(ymax, labs, pys)

    for y, x in zip(pys.tolist(), pxs.tolist()):
        k = labels[y, x] - 1
        v = img[y, x]
        rx = x - xmin[k]
        ry = y - ymin[k]
        npix[k] += 1
        flux[k] += v
        sx[k] += v * rx
        sy[k] += v * ry
        sxx[k] += v * rx * rx
        syy[k] += v * ry * ry
        sxy[k] += v * rx * ry
        if v > peak[k]:
            peak[k] = v
        if has_mask and not touches_mask[k]:
            for dx, dy in _OFFS8:
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and mask[ny, nx]:
                    touches_mask[k] = 1
                    break
    return (npix, flux, sx, sy, sxx, syy, sxy, peak,
            xmin, xmax, ymin, ymax, touches_mask)


def measure_components_sub(img, levels, jx0, jx1, wx, jy0, jy1, wy,
                           labels, ncomp, mask, has_mask, pys, pxs):
    """measure_components over (img - expanded(levels)), without materializing
    the full subtracted image in this fallback."""
    sub = expand_subtract(img, levels, jx0, jx1, wx, jy0, jy1, wy)
    return measure_components(sub, labels, ncomp, mask, has_mask, pys, pxs)


def _subpix_offsets(subpix):
    return (np.arange(subpix) + 0.5) / subpix - 0.5


def _band(subpix):
    # half width of the classification band around the boundary: pixel
    # half-diagonal plus the sample-cell half-diagonal (the coverage ramp)
    return _HALF_DIAG + _HALF_DIAG / subpix


def circle_sum(img, var, has_var, xs, ys, rs, subpix):
    """Aperture sums over circles.

    Boundary pixels are sub-sampled on a subpix x subpix grid; each sample
    contributes its first-order boundary-coverage weight
    clip(0.5 + signed_distance * subpix, 0, 1).
    """
    h, w = img.shape
    n = xs.shape[0]
    flux = np.zeros(n)
    err2 = np.zeros(n)
    offs = _subpix_offsets(subpix)
    nsub2 = float(subpix * subpix)
    band = _band(subpix)
    for i in range(n):
        cx, cy, r = xs[i], ys[i], rs[i]
        if r <= 0.0:
            continue
        x_lo = max(int(np.ceil(cx - r - 0.5)), 0)
        x_hi = min(int(np.floor(cx + r + 0.5)), w - 1)
        y_lo = max(int(np.ceil(cy - r - 0.5)), 0)
        y_hi = min(int(np.floor(cy + r + 0.5)), h - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        pxs = np.arange(x_lo, x_hi + 1, dtype=np.float64)
        pys = np.arange(y_lo, y_hi + 1, dtype=np.float64)
        dx = pxs - cx
        dy = pys - cy
        d = np.sqrt(dx[None, :] ** 2 + dy[:, None] ** 2)
        patch = img[y_lo:y_hi + 1, x_lo:x_hi + 1]
        finite = np.isfinite(patch)
        full = (r - d >= band) & finite
        border = (d - r < band) & ~full & finite
        frac = np.zeros_like(d)
        frac[full] = 1.0
        if border.any():
            by, bx = np.nonzero(border)
            sdx = (pxs[bx][:, None] + offs[None, :]) - cx
            sdy = (pys[by][:, None] + offs[None, :]) - cy
            dist = r - np.sqrt(sdx[:, None, :] ** 2 + sdy[:, :, None] ** 2)
            wgt = np.clip(0.5 + dist * subpix, 0.0, 1.0)
            frac[by, bx] = wgt.reshape(len(bx), -1).sum(axis=1) / nsub2
        flux[i] = np.sum(patch[finite] * frac[finite])
        if has_var:
            vpatch = var[y_lo:y_hi + 1, x_lo:x_hi + 1]
            err2[i] = np.sum(vpatch[finite] * frac[finite])
    return flux, np.sqrt(err2), None


def _ellipse_coverage(qxx, qyy, qxy, r_scale, r2, sdx, sdy, subpix):
    """Coverage weights for sample points against the quadratic-form boundary."""
    q = qxx * sdx ** 2 + qyy * sdy ** 2 + qxy * sdx * sdy
    re = np.sqrt(q)
    gx = 2.0 * qxx * sdx + qxy * sdy
    gy = 2.0 * qyy * sdy + qxy * sdx
    gn = np.sqrt(gx * gx + gy * gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = (r_scale - re) * 2.0 * re / gn
    wgt = np.clip(0.5 + dist * subpix, 0.0, 1.0)
    degen = gn == 0.0
    if degen.any():
        wgt[degen] = (q[degen] < r2).astype(np.float64)
    return wgt


def ellipse_sum(img, var, has_var, xs, ys, amax, ext_x, ext_y,
                cxx, cyy, cxy, r_scale, subpix):
    """Aperture sums over ellipses cxx dx^2 + cyy dy^2 + cxy dx dy <= r_scale^2.

    Same coverage-weighted sub-sampling as circle_sum; the signed distance to
    the boundary is the first-order estimate (r_scale - re) * 2 re / |grad q|.
    """
    h, w = img.shape
    n = xs.shape[0]
    flux = np.zeros(n)
    err2 = np.zeros(n)
    offs = _subpix_offsets(subpix)
    nsub2 = float(subpix * subpix)
    band = _band(subpix)
    r2 = r_scale * r_scale
    for i in range(n):
        cx, cy = xs[i], ys[i]
        qxx, qyy, qxy = cxx[i], cyy[i], cxy[i]
        reach = amax[i] * r_scale
        x_lo = max(int(np.ceil(cx - ext_x[i] * r_scale - 0.5)), 0)
        x_hi = min(int(np.floor(cx + ext_x[i] * r_scale + 0.5)), w - 1)
        y_lo = max(int(np.ceil(cy - ext_y[i] * r_scale - 0.5)), 0)
        y_hi = min(int(np.floor(cy + ext_y[i] * r_scale + 0.5)), h - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        pxs = np.arange(x_lo, x_hi + 1, dtype=np.float64)
        pys = np.arange(y_lo, y_hi + 1, dtype=np.float64)
        dx = pxs[None, :] - cx
        dy = pys[:, None] - cy
        d = np.sqrt(dx ** 2 + dy ** 2)
        patch = img[y_lo:y_hi + 1, x_lo:x_hi + 1]
        finite = np.isfinite(patch)
        near = (d - reach < band) & finite
        # full shortcut: all four corners inside and the center at least one
        # classification band away from the boundary (keeps the coverage ramp
        # entirely within sampled pixels)
        corner_in = np.ones_like(near)
        for ox in (-0.5, 0.5):
            for oy in (-0.5, 0.5):
                q = (qxx * (dx + ox) ** 2 + qyy * (dy + oy) ** 2 +
                     qxy * (dx + ox) * (dy + oy))
                corner_in &= q <= r2
        q_c = qxx * dx ** 2 + qyy * dy ** 2 + qxy * dx * dy
        re_c = np.sqrt(q_c)
        gx = 2.0 * qxx * dx + qxy * dy
        gy = 2.0 * qyy * dy + qxy * dx
        gn = np.sqrt(gx * gx + gy * gy)
        with np.errstate(divide="ignore", invalid="ignore"):
            dist_c = np.where(gn > 0.0, (r_scale - re_c) * 2.0 * re_c / gn, np.inf)
        full = near & corner_in & (dist_c >= band)
        border = near & ~full
        frac = np.zeros_like(d)
        frac[full] = 1.0
        if border.any():
            by, bx = np.nonzero(border)
            sdx = (pxs[bx][:, None, None] + offs[None, None, :]) - cx  # (nb,1,s)
            sdy = (pys[by][:, None, None] + offs[None, :, None]) - cy  # (nb,s,1)
            wgt = _ellipse_coverage(qxx, qyy, qxy, r_scale, r2, sdx, sdy, subpix)
            frac[by, bx] = wgt.reshape(len(bx), -1).sum(axis=1) / nsub2
        flux[i] = np.sum(patch[finite] * frac[finite])
        if has_var:
            vpatch = var[y_lo:y_hi + 1, x_lo:x_hi + 1]
            err2[i] = np.sum(vpatch[finite] * frac[finite])
    return flux, np.sqrt(err2), None


def kron_radius_kernel(img, xs, ys, cxx, cyy, cxy, ext_x, ext_y, r_max):
    """Flux-weighted mean elliptical radius within elliptical radius r_max."""
    h, w = img.shape
    n = xs.shape[0]
    kron = np.zeros(n)
    flag = np.zeros(n, dtype=np.int32)
    r2max = r_max * r_max
    for i in range(n):
        cx, cy = xs[i], ys[i]
        x_lo = max(int(np.ceil(cx - ext_x[i] * r_max - 0.5)), 0)
        x_hi = min(int(np.floor(cx + ext_x[i] * r_max + 0.5)), w - 1)
        y_lo = max(int(np.ceil(cy - ext_y[i] * r_max - 0.5)), 0)
        y_hi = min(int(np.floor(cy + ext_y[i] * r_max + 0.5)), h - 1)
        if x_lo > x_hi or y_lo > y_hi:
            flag[i] = 1
            continue
        pxs = np.arange(x_lo, x_hi + 1, dtype=np.float64)
        pys = np.arange(y_lo, y_hi + 1, dtype=np.float64)
        dx = pxs[None, :] - cx
        dy = pys[:, None] - cy
        q = cxx[i] * dx ** 2 + cyy[i] * dy ** 2 + cxy[i] * dx * dy
        patch = img[y_lo:y_hi + 1, x_lo:x_hi + 1]
        sel = (q <= r2max) & np.isfinite(patch)
        av = np.abs(patch[sel])
        den = av.sum()
        if den > 0.0:
            kron[i] = np.sum(av * np.sqrt(q[sel])) / den
        else:
            flag[i] = 1
    return kron, flag


def mask_ellipse_kernel(mask, xs, ys, cxx, cyy, cxy, ext_x, ext_y, r_scale):
    """Union pixels whose centers fall inside each ellipse into the mask."""
    h, w = mask.shape
    r2 = r_scale * r_scale
    for i in range(xs.shape[0]):
        cx, cy = xs[i], ys[i]
        x_lo = max(int(np.ceil(cx - ext_x[i] * r_scale - 0.5)), 0)
        x_hi = min(int(np.floor(cx + ext_x[i] * r_scale + 0.5)), w - 1)
        y_lo = max(int(np.ceil(cy - ext_y[i] * r_scale - 0.5)), 0)
        y_hi = min(int(np.floor(cy + ext_y[i] * r_scale + 0.5)), h - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        dx = np.arange(x_lo, x_hi + 1, dtype=np.float64)[None, :] - cx
        dy = np.arange(y_lo, y_hi + 1, dtype=np.float64)[:, None] - cy
        q = cxx[i] * dx ** 2 + cyy[i] * dy ** 2 + cxy[i] * dx * dy
        sub = mask[y_lo:y_hi + 1, x_lo:x_hi + 1]
        sub[q <= r2] = 1
