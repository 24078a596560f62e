"""Kernel backend selection.

The compiled extension is preferred; the NumPy fallback is used when the
extension is unavailable or when KIRA_PURE is set in the environment. Both
backends expose the same functions (see pure.py for the semantics contract).
"""

import os

from . import pure

if os.environ.get("KIRA_PURE"):
    _impl = pure
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND
COMPILED = BACKEND == "native"

decode_pixels = _impl.decode_pixels
cell_stats = _impl.cell_stats
bilinear_expand = _impl.bilinear_expand
expand_subtract = _impl.expand_subtract
detect_above = _impl.detect_above
detect_sub = _impl.detect_sub
label_components = _impl.label_components
measure_components = _impl.measure_components
measure_components_sub = _impl.measure_components_sub
circle_sum = _impl.circle_sum
ellipse_sum = _impl.ellipse_sum
kron_radius_kernel = _impl.kron_radius_kernel
mask_ellipse_kernel = _impl.mask_ellipse_kernel


def backend() -> str:
    """Name of the active kernel backend: 'native' or 'pure'."""
    return BACKEND
