"""Batch aperture photometry: circular and elliptical sums, Kron radius,
ellipse masking. Boundary pixels are weighted by subpix x subpix sub-sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .ellipse import ellipse_coeffs
from .errors import DimensionMismatch, InvalidAxes, NegativeRadius
from .extraction import FLAG_TRUNCATED


def _as1d(x):
    return np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()


@dataclass
class ApertureBatch:
    """Aperture centers plus circle radii or ellipse shape parameters."""

    x: np.ndarray
    y: np.ndarray
    r: Optional[np.ndarray] = None
    a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    subpix: int = 5

    @classmethod
    def circles(cls, x, y, r, subpix: int = 5) -> "ApertureBatch":
        x, y, r = _as1d(x), _as1d(y), _as1d(r)
        if not (len(x) == len(y) == len(r)):
            raise DimensionMismatch("coordinate arrays must have equal length")
        if np.any(r < 0):
            raise NegativeRadius("aperture radius below zero")
        if subpix < 1:
            raise ValueError("subpix must be >= 1")
        return cls(x=x, y=y, r=r, subpix=subpix)

    @classmethod
    def ellipses(cls, x, y, a, b, theta, subpix: int = 5) -> "ApertureBatch":
        x, y, a, b, theta = _as1d(x), _as1d(y), _as1d(a), _as1d(b), _as1d(theta)
        if not (len(x) == len(y) == len(a) == len(b) == len(theta)):
            raise DimensionMismatch("coordinate arrays must have equal length")
        if np.any(b <= 0) or np.any(a < b):
            raise InvalidAxes("need a >= b > 0")
        if subpix < 1:
            raise ValueError("subpix must be >= 1")
        return cls(x=x, y=y, a=a, b=b, theta=theta, subpix=subpix)

    def __len__(self) -> int:
        return len(self.x)

    @classmethod
    def from_objects(cls, objects, subpix: int = 5) -> "ApertureBatch":
        """Ellipse batch from extracted SourceObjects."""
        return cls.ellipses(
            [o.x for o in objects], [o.y for o in objects],
            [o.a for o in objects], [o.b for o in objects],
            [o.theta for o in objects], subpix=subpix)


def _check_image(image):
    img = np.ascontiguousarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionMismatch("image must be 2-D")
    return img


def _check_var(var, img):
    if var is None:
        return np.zeros((1, 1)), False
    v = np.ascontiguousarray(var, dtype=np.float64)
    if v.shape != img.shape:
        raise DimensionMismatch(f"var shape {v.shape} != image shape {img.shape}")
    return v, True


def _ellipse_geometry(batch):
    """Coefficients and unit-radius bbox half-extents for an ellipse batch."""
    if batch.a is None:
        raise InvalidAxes("batch has no ellipse parameters")
    cxx, cyy, cxy = ellipse_coeffs(batch.a, batch.b, batch.theta)
    det4 = cxx * cyy - cxy * cxy / 4.0
    ext_x = np.sqrt(cyy / det4)
    ext_y = np.sqrt(cxx / det4)
    return cxx, cyy, cxy, ext_x, ext_y


def _truncation_flags(img, x, y, ext_x, ext_y):
    h, w = img.shape
    out = np.zeros(len(x), dtype=np.int32)
    out[(x - ext_x < -0.5) | (x + ext_x > w - 0.5) |
        (y - ext_y < -0.5) | (y + ext_y > h - 0.5)] |= FLAG_TRUNCATED
    return out


def sum_circle(image, batch: ApertureBatch, var=None):
    """Sum pixel values inside circular apertures.

    Returns (flux, fluxerr, flag) arrays in batch order. fluxerr is zero
    unless a variance matrix is given. Apertures reaching past the image edge
    sum only in-image pixels and get FLAG_TRUNCATED.
    """
    img = _check_image(image)
    if batch.r is None:
        raise NegativeRadius("batch has no circle radii")
    v, has_var = _check_var(var, img)
    flux, err, _ = _kernels.circle_sum(img, v, has_var, batch.x, batch.y,
                                       batch.r, int(batch.subpix))
    flag = _truncation_flags(img, batch.x, batch.y, batch.r, batch.r)
    return flux, err, flag


def sum_ellipse(image, batch: ApertureBatch, r_scale: float = 1.0, var=None):
    """Sum pixel values inside ellipses scaled by r_scale.

    Membership: cxx*dx^2 + cyy*dy^2 + cxy*dx*dy <= r_scale^2 with coefficients
    from ellipse_coeffs(a, b, theta). Same boundary sub-sampling and
    truncation behavior as sum_circle.
    """
    img = _check_image(image)
    v, has_var = _check_var(var, img)
    cxx, cyy, cxy, ext_x, ext_y = _ellipse_geometry(batch)
    flux, err, _ = _kernels.ellipse_sum(img, v, has_var, batch.x, batch.y,
                                        batch.a, ext_x, ext_y, cxx, cyy, cxy,
                                        float(r_scale), int(batch.subpix))
    flag = _truncation_flags(img, batch.x, batch.y, ext_x * r_scale, ext_y * r_scale)
    return flux, err, flag


def kron_radius(image, batch: ApertureBatch, r_max: float = 6.0):
    """Flux-weighted mean elliptical radius within elliptical radius r_max.

    kron_r = sum(|v| * r_e) / sum(|v|) over pixels with r_e <= r_max, where
    r_e = sqrt(cxx*dx^2 + cyy*dy^2 + cxy*dx*dy). A zero denominator yields
    kron_r 0 with the flag set.
    """
    if r_max <= 0:
        raise ValueError("r_max must be > 0")
    img = _check_image(image)
    cxx, cyy, cxy, ext_x, ext_y = _ellipse_geometry(batch)
    kron, flag = _kernels.kron_radius_kernel(img, batch.x, batch.y,
                                             cxx, cyy, cxy, ext_x, ext_y,
                                             float(r_max))
    flag = flag | _truncation_flags(img, batch.x, batch.y,
                                    ext_x * r_max, ext_y * r_max)
    return kron, flag


def mask_ellipse(mask, batch: ApertureBatch, r_scale: float = 1.0):
    """Set mask pixels whose centers fall inside the scaled ellipses.

    Union semantics: existing True entries are preserved. The mask is updated
    in place and also returned.
    """
    m = np.asarray(mask)
    if m.ndim != 2:
        raise DimensionMismatch("mask must be 2-D")
    cxx, cyy, cxy, ext_x, ext_y = _ellipse_geometry(batch)
    view = np.ascontiguousarray(m, dtype=np.uint8)
    _kernels.mask_ellipse_kernel(view, batch.x, batch.y, cxx, cyy, cxy,
                                 ext_x, ext_y, float(r_scale))
    if view is not m:
        np.copyto(m, view.astype(m.dtype))
    return mask
