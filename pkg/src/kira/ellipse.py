"""Conversions between ellipse axes (a, b, theta) and the coefficient form
cxx*dx^2 + cyy*dy^2 + cxy*dx*dy = 1 (unit-radius convention).
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidAxes, NotAnEllipse


def ellipse_coeffs(a, b, theta):
    """Axes and position angle -> quadratic form coefficients.

    The ellipse boundary satisfies cxx*dx^2 + cyy*dy^2 + cxy*dx*dy = 1.
    """
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if np.any(b <= 0) or np.any(a < b):
        raise InvalidAxes("need a >= b > 0")
    ct = np.cos(theta)
    st = np.sin(theta)
    ia2 = 1.0 / (a * a)
    ib2 = 1.0 / (b * b)
    cxx = ct * ct * ia2 + st * st * ib2
    cyy = st * st * ia2 + ct * ct * ib2
    cxy = 2.0 * ct * st * (ia2 - ib2)
    return cxx, cyy, cxy


def ellipse_axes(cxx, cyy, cxy):
    """Quadratic form coefficients -> (a, b, theta), theta in (-pi/2, pi/2].

    Raises NotAnEllipse unless the form is positive definite.
    """
    cxx = np.atleast_1d(np.asarray(cxx, dtype=np.float64))
    cyy = np.atleast_1d(np.asarray(cyy, dtype=np.float64))
    cxy = np.atleast_1d(np.asarray(cxy, dtype=np.float64))
    if np.any(cxx <= 0) or np.any(cyy <= 0) or np.any(4.0 * cxx * cyy - cxy * cxy <= 0):
        raise NotAnEllipse("coefficient triple is not positive definite")
    p = (cxx + cyy) / 2.0
    q = np.sqrt(((cxx - cyy) / 2.0) ** 2 + (cxy / 2.0) ** 2)
    a = 1.0 / np.sqrt(p - q)
    b = 1.0 / np.sqrt(p + q)
    theta = 0.5 * np.arctan2(-cxy, cyy - cxx)
    return a, b, theta
