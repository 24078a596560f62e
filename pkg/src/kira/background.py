"""Mesh background estimation: sigma-clipped cell statistics, mode estimator
for crowded cells, 3x3 mesh median filter, bilinear expansion to full size.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DimensionMismatch


@dataclass
class BackgroundModel:
    """Per-cell sky level and noise RMS over a square-cell mesh."""

    mesh_w: int
    mesh_h: int
    cell_size: int
    levels: np.ndarray  # (mesh_h, mesh_w)
    rms: np.ndarray     # (mesh_h, mesh_w)
    image_w: int
    image_h: int


def _fill_empty_cells(mesh: np.ndarray) -> np.ndarray:
    """Replace NaN cells with the median of their non-NaN 3x3 neighbors.

    Repeats until nothing is left; an all-NaN mesh becomes all zeros.
    """
    mesh = mesh.copy()
    mh, mw = mesh.shape
    while np.isnan(mesh).any():
        holes = np.argwhere(np.isnan(mesh))
        filled = mesh.copy()
        progress = False
        for jy, jx in holes:
            window = mesh[max(jy - 1, 0):jy + 2, max(jx - 1, 0):jx + 2]
            vals = window[~np.isnan(window)]
            if vals.size:
                filled[jy, jx] = np.median(vals)
                progress = True
        if not progress:
            filled[np.isnan(filled)] = 0.0
        mesh = filled
    return mesh


def _median_filter3(mesh: np.ndarray) -> np.ndarray:
    """3x3 median filter with windows restricted to the mesh bounds."""
    mh, mw = mesh.shape
    if mh * mw == 1:
        return mesh.copy()
    padded = np.full((mh + 2, mw + 2), np.nan)
    padded[1:-1, 1:-1] = mesh
    stack = np.empty((9, mh, mw))
    k = 0
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            stack[k] = padded[dy:dy + mh, dx:dx + mw]
            k += 1
    return np.nanmedian(stack, axis=0)


def makeback(image: np.ndarray, mask: Optional[np.ndarray] = None,
             cell_size: int = 64, clip_sigma: float = 3.0,
             clip_iters: int = 5) -> BackgroundModel:
    """Build a background model from an input image.

    Per cell, pixel values are iteratively sigma-clipped; the cell level is the
    clipped mean, or the mode estimate 2.5*median - 1.5*mean when clipping
    removed more than 20% of the cell (crowded field). Cell rms is the clipped
    standard deviation. Masked and NaN pixels never enter the statistics; fully
    masked cells inherit the median of their neighbors.
    """
    if cell_size < 8:
        raise ValueError("cell_size must be >= 8")
    if clip_iters < 0:
        raise ValueError("clip_iters must be >= 0")
    img = np.ascontiguousarray(image, dtype=np.float64)
    h, w = img.shape
    if mask is not None:
        m = np.asarray(mask)
        if m.shape != img.shape:
            raise DimensionMismatch(f"mask shape {m.shape} != image shape {img.shape}")
        mask_u8 = np.ascontiguousarray(m != 0).view(np.uint8)
    else:
        mask_u8 = _NO_MASK
    levels, rms, _counts = _kernels.cell_stats(
        img, mask_u8, int(cell_size), float(clip_sigma), int(clip_iters))
    levels = _median_filter3(_fill_empty_cells(levels))
    rms = _median_filter3(_fill_empty_cells(rms))
    mh, mw = levels.shape
    return BackgroundModel(mesh_w=mw, mesh_h=mh, cell_size=int(cell_size),
                           levels=levels, rms=rms, image_w=w, image_h=h)


_NO_MASK = np.zeros((1, 1), dtype=np.uint8)  # sentinel: no pixels masked


def _cell_centers(n_pixels: int, n_cells: int, cell_size: int) -> np.ndarray:
    starts = np.arange(n_cells) * cell_size
    ends = np.minimum(starts + cell_size, n_pixels) - 1
    return (starts + ends) / 2.0


@lru_cache(maxsize=32)
def _interp_indices(n_pixels, n_cells, cell_size):
    coords = np.arange(n_pixels, dtype=np.float64)
    if n_cells == 1:
        zero = np.zeros(n_pixels, dtype=np.int32)
        out = (zero, zero, np.zeros(n_pixels))
    else:
        centers = _cell_centers(n_pixels, n_cells, cell_size)
        j1 = np.clip(np.searchsorted(centers, coords), 1, n_cells - 1)
        j0 = j1 - 1
        t = (coords - centers[j0]) / (centers[j1] - centers[j0])
        t = np.clip(t, 0.0, 1.0)
        out = (j0.astype(np.int32), j1.astype(np.int32), t)
    for arr in out:
        arr.setflags(write=False)
    return out


def _expand(bkg: BackgroundModel, mesh: np.ndarray) -> np.ndarray:
    jx0, jx1, wx = _interp_indices(bkg.image_w, bkg.mesh_w, bkg.cell_size)
    jy0, jy1, wy = _interp_indices(bkg.image_h, bkg.mesh_h, bkg.cell_size)
    return _kernels.bilinear_expand(
        np.ascontiguousarray(mesh, dtype=np.float64), jx0, jx1, wx, jy0, jy1, wy)


def backarray(bkg: BackgroundModel) -> np.ndarray:
    """Full-resolution background via bilinear interpolation of cell centers.

    Pixels outside the outermost cell centers clamp to the nearest cell value.
    """
    return _expand(bkg, bkg.levels)


def rmsarray(bkg: BackgroundModel) -> np.ndarray:
    """Full-resolution noise RMS, interpolated like backarray."""
    return _expand(bkg, bkg.rms)


def subbackarray(image: np.ndarray, bkg: BackgroundModel) -> np.ndarray:
    """image - backarray(bkg), elementwise; the input is not modified."""
    img = np.ascontiguousarray(image, dtype=np.float64)
    if img.shape != (bkg.image_h, bkg.image_w):
        raise DimensionMismatch(
            f"image shape {img.shape} != model shape {(bkg.image_h, bkg.image_w)}")
    jx0, jx1, wx = _interp_indices(bkg.image_w, bkg.mesh_w, bkg.cell_size)
    jy0, jy1, wy = _interp_indices(bkg.image_h, bkg.mesh_h, bkg.cell_size)
    return _kernels.expand_subtract(
        img, np.ascontiguousarray(bkg.levels, dtype=np.float64),
        jx0, jx1, wx, jy0, jy1, wy)
