"""Independent brute-force oracles used by the tests.

These deliberately avoid the library's kernel code paths: membership is plain
point counting on a fine sub-grid, statistics are direct loops.
"""

import numpy as np


def quad_coeffs(a, b, theta):
    ct, st = np.cos(theta), np.sin(theta)
    cxx = ct * ct / a ** 2 + st * st / b ** 2
    cyy = st * st / a ** 2 + ct * ct / b ** 2
    cxy = 2.0 * ct * st / a ** 2 - 2.0 * ct * st / b ** 2
    return cxx, cyy, cxy


def aperture_sum_grid(img, cx, cy, cxx, cyy, cxy, reach, subpix=101, var=None):
    """Pixel-fraction aperture sum by counting subpix^2 sample points per pixel
    inside the unit quadratic form. Returns (flux, err)."""
    h, w = img.shape
    offs = (np.arange(subpix) + 0.5) / subpix - 0.5
    x_lo = max(int(np.ceil(cx - reach - 0.5)), 0)
    x_hi = min(int(np.floor(cx + reach + 0.5)), w - 1)
    y_lo = max(int(np.ceil(cy - reach - 0.5)), 0)
    y_hi = min(int(np.floor(cy + reach + 0.5)), h - 1)
    flux = 0.0
    err2 = 0.0
    for py in range(y_lo, y_hi + 1):
        for px in range(x_lo, x_hi + 1):
            v = img[py, px]
            if not np.isfinite(v):
                continue
            dx = px + offs[None, :] - cx
            dy = py + offs[:, None] - cy
            q = cxx * dx ** 2 + cyy * dy ** 2 + cxy * dx * dy
            frac = float((q <= 1.0).mean())
            flux += v * frac
            if var is not None:
                err2 += var[py, px] * frac
    return flux, np.sqrt(err2)


def circle_sum_grid(img, cx, cy, r, subpix=101, var=None):
    if r <= 0:
        return 0.0, 0.0
    return aperture_sum_grid(img, cx, cy, 1.0 / r ** 2, 1.0 / r ** 2, 0.0, r,
                             subpix=subpix, var=var)


def sigma_clipped_cell(values, clip_sigma, clip_iters):
    """Direct-loop sigma clipping; returns (level, rms, kept)."""
    vals = [float(v) for v in values if np.isfinite(v)]
    n0 = len(vals)
    cur = list(vals)
    for _ in range(clip_iters):
        mu = sum(cur) / len(cur)
        sd = (sum((v - mu) ** 2 for v in cur) / len(cur)) ** 0.5
        if sd == 0.0:
            break
        nxt = [v for v in cur if abs(v - mu) <= clip_sigma * sd]
        if len(nxt) in (0, len(cur)):
            break
        cur = nxt
    mu = sum(cur) / len(cur)
    sd = (sum((v - mu) ** 2 for v in cur) / len(cur)) ** 0.5
    if (n0 - len(cur)) > 0.2 * n0:
        level = 2.5 * float(np.median(cur)) - 1.5 * mu
    else:
        level = mu
    return level, sd, len(cur)


def count_components(det, connectivity=8):
    """Flood-fill component count over a boolean map (test-local labeler)."""
    det = np.asarray(det, dtype=bool)
    h, w = det.shape
    seen = np.zeros((h, w), dtype=bool)
    if connectivity == 8:
        offs = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    else:
        offs = [(0, -1), (-1, 0), (1, 0), (0, 1)]
    count = 0
    sizes = []
    for y0 in range(h):
        for x0 in range(w):
            if not det[y0, x0] or seen[y0, x0]:
                continue
            count += 1
            size = 0
            stack = [(y0, x0)]
            seen[y0, x0] = True
            while stack:
                y, x = stack.pop()
                size += 1
                for dx, dy in offs:
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < w and 0 <= ny < h and det[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            sizes.append(size)
    return count, sizes


def kron_pixel_loop(img, cx, cy, cxx, cyy, cxy, r_max):
    """Pixel-center Kron radius oracle."""
    h, w = img.shape
    num = 0.0
    den = 0.0
    for py in range(h):
        for px in range(w):
            v = img[py, px]
            if not np.isfinite(v):
                continue
            dx = px - cx
            dy = py - cy
            q = cxx * dx * dx + cyy * dy * dy + cxy * dx * dy
            if q <= r_max * r_max:
                num += abs(v) * np.sqrt(q)
                den += abs(v)
    return num / den if den > 0 else 0.0
