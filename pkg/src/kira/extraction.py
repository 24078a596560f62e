"""Object detection on background-subtracted images.

Pixels above threshold form connected components; components large enough
become SourceObjects with flux-weighted centroids and second-moment shapes.
No deblending: each connected component is one object.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from . import _kernels
from .background import BackgroundModel, _interp_indices
from .ellipse import ellipse_coeffs
from .errors import DimensionMismatch

FLAG_TRUNCATED = 1        # object or aperture touches the image border
FLAG_SATURATED = 2        # reserved
FLAG_MASKED_OVERLAP = 4   # object pixels adjacent to masked pixels

MIN_AXIS = 0.01  # px; floor for degenerate moment matrices

_NO_MASK = np.zeros((1, 1), dtype=np.uint8)


@dataclass
class ExtractParams:
    """Detection parameters.

    thresh_sigma: detection threshold in units of the local rms.
    min_area: minimum pixel count for a component to become an object.
    connectivity: 4 or 8 (default 8).
    mask: optional boolean matrix; masked pixels cannot be detected, and
          detections whose centroid lands on a masked pixel are discarded.
    """

    thresh_sigma: float
    min_area: int = 5
    connectivity: int = 8
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.thresh_sigma <= 0:
            raise ValueError("thresh_sigma must be > 0")
        if self.min_area < 1:
            raise ValueError("min_area must be >= 1")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


@dataclass
class SourceObject:
    """One extracted object (background-subtracted units, 0-based pixels)."""

    x: float
    y: float
    flux: float
    npix: int
    a: float
    b: float
    theta: float
    cxx: float
    cyy: float
    cxy: float
    peak: float
    flag: int


def _norm_mask(mask, shape):
    if mask is None:
        return None
    m = np.asarray(mask)
    if m.shape != shape:
        raise DimensionMismatch(f"mask shape {m.shape} != image shape {shape}")
    return np.ascontiguousarray(m != 0).view(np.uint8)


def _bkg_indices(bkg: BackgroundModel):
    jx0, jx1, wx = _interp_indices(bkg.image_w, bkg.mesh_w, bkg.cell_size)
    jy0, jy1, wy = _interp_indices(bkg.image_h, bkg.mesh_h, bkg.cell_size)
    return jx0, jx1, wx, jy0, jy1, wy


def extract(image: np.ndarray,
            rms_source: Union[BackgroundModel, float, np.ndarray],
            params: ExtractParams) -> List[SourceObject]:
    """Extract objects from a background-subtracted image.

    The detection threshold is params.thresh_sigma times the local rms, taken
    from a BackgroundModel (interpolated to full resolution), a scalar, or a
    full-size rms matrix. Output is sorted by descending flux, ties broken by
    (y, x) ascending.
    """
    img = np.ascontiguousarray(image, dtype=np.float64)
    mask = _norm_mask(params.mask, img.shape)

    if isinstance(rms_source, BackgroundModel):
        # fused expand + threshold keeps the hot path in one kernel call
        bkg = rms_source
        det = _kernels.detect_above(
            img, np.ascontiguousarray(bkg.rms, dtype=np.float64),
            *_bkg_indices(bkg), float(params.thresh_sigma),
            mask if mask is not None else _NO_MASK, mask is not None)
    else:
        if np.isscalar(rms_source):
            rms = float(rms_source)
        else:
            rms = np.asarray(rms_source, dtype=np.float64)
            if rms.shape != img.shape:
                raise DimensionMismatch(
                    f"rms shape {rms.shape} != image shape {img.shape}")
        with np.errstate(invalid="ignore"):
            det = img > params.thresh_sigma * rms
        if mask is not None:
            det &= mask == 0
        det = np.ascontiguousarray(det).view(np.uint8)

    labels, ncomp, pys, pxs = _kernels.label_components(det, params.connectivity)
    measured = _kernels.measure_components(
        img, labels, ncomp, mask if mask is not None else _NO_MASK,
        mask is not None, pys, pxs)
    return _finalize(img.shape, measured, params, mask)


def extract_raw(image: np.ndarray, bkg: BackgroundModel,
                params: ExtractParams) -> List[SourceObject]:
    """Extract objects from a raw image given its background model.

    Identical results to extract(subbackarray(image, bkg), bkg, params), but
    the background-subtracted values are produced on the fly inside the
    kernels instead of materializing the full subtracted image.
    """
    img = np.ascontiguousarray(image, dtype=np.float64)
    if img.shape != (bkg.image_h, bkg.image_w):
        raise DimensionMismatch(
            f"image shape {img.shape} != model shape {(bkg.image_h, bkg.image_w)}")
    mask = _norm_mask(params.mask, img.shape)
    idx = _bkg_indices(bkg)
    levels = np.ascontiguousarray(bkg.levels, dtype=np.float64)
    rms = np.ascontiguousarray(bkg.rms, dtype=np.float64)
    det = _kernels.detect_sub(img, levels, rms, *idx,
                              float(params.thresh_sigma),
                              mask if mask is not None else _NO_MASK,
                              mask is not None)
    labels, ncomp, pys, pxs = _kernels.label_components(det, params.connectivity)
    measured = _kernels.measure_components_sub(
        img, levels, *idx, labels, ncomp,
        mask if mask is not None else _NO_MASK, mask is not None, pys, pxs)
    return _finalize(img.shape, measured, params, mask)


def _finalize(shape, measured, params: ExtractParams, mask) -> List[SourceObject]:
    h, w = shape
    (npix, flux, sx, sy, sxx, syy, sxy, peak,
     xmin, xmax, ymin, ymax, touches) = measured

    keep = npix >= params.min_area
    if not keep.any():
        return []
    npix, flux, sx, sy, sxx, syy, sxy = (
        arr[keep] for arr in (npix, flux, sx, sy, sxx, syy, sxy))
    peak, xmin, xmax, ymin, ymax, touches = (
        arr[keep] for arr in (peak, xmin, xmax, ymin, ymax, touches))

    rx = sx / flux
    ry = sy / flux
    xs = xmin + rx
    ys = ymin + ry
    mxx = sxx / flux - rx * rx
    myy = syy / flux - ry * ry
    mxy = sxy / flux - rx * ry
    theta = 0.5 * np.arctan2(2.0 * mxy, mxx - myy)
    half_tr = (mxx + myy) / 2.0
    root = np.sqrt(((mxx - myy) / 2.0) ** 2 + mxy * mxy)
    a = np.maximum(np.sqrt(np.maximum(half_tr + root, 0.0)), MIN_AXIS)
    b = np.maximum(np.sqrt(np.maximum(half_tr - root, 0.0)), MIN_AXIS)
    cxx, cyy, cxy = ellipse_coeffs(a, b, theta)

    flag = np.zeros(len(flux), dtype=np.int64)
    flag[(xmin == 0) | (ymin == 0) | (xmax == w - 1) | (ymax == h - 1)] |= FLAG_TRUNCATED
    flag[touches != 0] |= FLAG_MASKED_OVERLAP

    if mask is not None:
        ix = np.clip(np.rint(xs), 0, w - 1).astype(np.int64)
        iy = np.clip(np.rint(ys), 0, h - 1).astype(np.int64)
        keep2 = mask[iy, ix] == 0
        if not keep2.all():
            xs, ys, flux, npix, a, b, theta = (
                arr[keep2] for arr in (xs, ys, flux, npix, a, b, theta))
            cxx, cyy, cxy, peak, flag = (
                arr[keep2] for arr in (cxx, cyy, cxy, peak, flag))

    order = np.lexsort((xs, ys, -flux))
    return [SourceObject(x=float(xs[i]), y=float(ys[i]), flux=float(flux[i]),
                         npix=int(npix[i]), a=float(a[i]), b=float(b[i]),
                         theta=float(theta[i]), cxx=float(cxx[i]),
                         cyy=float(cyy[i]), cxy=float(cxy[i]),
                         peak=float(peak[i]), flag=int(flag[i]))
            for i in order]
