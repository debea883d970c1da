"""Bessel functions of real order, with the range the ramp solutions rely on."""

from __future__ import annotations

import numpy as np
from scipy import special

MAX_ORDER = 200.0
MAX_ARG = 1.0e4


class BesselRangeError(ValueError):
    pass


def _check(nu, x):
    nu = np.asarray(nu, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(nu) > MAX_ORDER):
        raise BesselRangeError(f"|order| exceeds {MAX_ORDER}")
    if np.any(x < 0) or np.any(x > MAX_ARG) or not np.all(np.isfinite(x)):
        raise BesselRangeError(f"argument outside [0, {MAX_ARG}]")
    return nu, x


def bessel_j_real_order(nu, x):
    """J_nu(x) for real ``|nu| <= 200`` and ``0 <= x <= 1e4``."""
    nu, x = _check(nu, x)
    out = special.jv(nu, x)
    return float(out) if out.ndim == 0 else out


def bessel_j_derivative(nu, x):
    """dJ_nu/dx via ``(J_{nu-1} - J_{nu+1})/2``."""
    nu, x = _check(nu, x)
    out = 0.5 * (special.jv(nu - 1.0, x) - special.jv(nu + 1.0, x))
    return float(out) if out.ndim == 0 else out


def bessel_y(nu, x):
    nu, x = _check(nu, x)
    out = special.yv(nu, x)
    return float(out) if out.ndim == 0 else out


def bessel_y_derivative(nu, x):
    nu, x = _check(nu, x)
    out = 0.5 * (special.yv(nu - 1.0, x) - special.yv(nu + 1.0, x))
    return float(out) if out.ndim == 0 else out
