"""The single-site map family T_r and its explicit transfer-operator calculus.

Everything here is a closed-form expression: the two-branch map ``T_r`` on
``X = [-1/2, 1/2]``, its invariant density ``u_r``, the densities ``w_y``
(parametrised by ``y`` in ``Y = [-2/3, 2/3]``) that the transfer operator
permutes, their fields, and the dual branches ``sigma_r``, ``tau_r`` with
place-dependent weight ``p_r``.  All functions broadcast over numpy arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import ParamOutOfRange
from .moebius import Moebius, compose

X_LO, X_HI = -0.5, 0.5
Y_LO, Y_HI = -2.0 / 3.0, 2.0 / 3.0
R_MAX = 0.4  # parameters produced by the feedback live in [-R_MAX, R_MAX]
EXPANDING_LIMIT = 2.0 / 3.0

WBAR_SERIES_BELOW = 0.01
PSI_SERIES_BELOW = 0.02
_SERIES_TERM_FLOOR = 1e-17

_SHIFT = Moebius(1.0, -1.0, 0.0, 1.0)


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def M_r(r: float) -> Moebius:
    """First (lower) branch matrix ``[[r+4, r+1], [2r, 2]]``."""
    return Moebius(r + 4.0, r + 1.0, 2.0 * r, 2.0)


def N_r(r: float) -> Moebius:
    """Second branch: ``f_M_r`` shifted down by one."""
    return compose(_SHIFT, M_r(r))


def alpha_r(r):
    """Branch point of T_r, where ``f_M_r`` reaches 1/2."""
    return _out(-np.asarray(r, dtype=float) / 4.0)


def gamma_r(r):
    """Fixed point of sigma_r, left end of the support of mu_r."""
    r = np.asarray(r, dtype=float)
    return _out(r / (1.0 + r))


def delta_r(r):
    """Fixed point of tau_r, right end of the support of mu_r."""
    r = np.asarray(r, dtype=float)
    return _out(r / (1.0 - r))


def _check_expanding(r):
    if np.any(np.abs(np.asarray(r, dtype=float)) >= EXPANDING_LIMIT):
        raise ParamOutOfRange(f"T_r needs |r| < 2/3, got r={r!r}")


def map_T(r, x):
    """Apply the site map T_r.

    Lower branch ``f_M_r`` on ``[-1/2, alpha_r)``, ``f_M_r - 1`` on
    ``[alpha_r, 1/2]``.  The branch point itself goes to the second branch
    (image -1/2), so the map is total on X.
    """
    _check_expanding(r)
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    f = ((r + 4.0) * x + (r + 1.0)) / (2.0 * r * x + 2.0)
    return _out(np.where(x < -r / 4.0, f, f - 1.0))


def map_T_prime(r, x):
    """Derivative of either branch: ``(4 - r^2) / (2 (r x + 1)^2)``."""
    _check_expanding(r)
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    return _out((4.0 - r * r) / (2.0 * (r * x + 1.0) ** 2))


def min_expansion(r):
    """Infimum of ``T_r'`` over X, attained on the boundary."""
    a = np.abs(np.asarray(r, dtype=float))
    return _out(2.0 * (2.0 - a) / (2.0 + a))


def lower_inverse(r, x):
    """Inverse of the first branch, mapping X onto ``[-1/2, alpha_r]``."""
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    return _out((2.0 * x - (r + 1.0)) / (r + 4.0 - 2.0 * r * x))


def upper_inverse(r, x):
    """Inverse of the second branch, mapping X onto ``[alpha_r, 1/2]``."""
    return lower_inverse(r, np.asarray(x, dtype=float) + 1.0)


def invariant_density_u(r, x):
    """Normalised T_r-invariant density.

    ``u_r(x) = 2 r^2 / ((r x - (1-r)) (r x - (1+r))) / log((r^2-4)/(9 r^2-4))``,
    with ``u_0 = 1`` where the normalising logarithm degenerates.
    """
    r = float(r)
    x = np.asarray(x, dtype=float)
    if r * r < 1e-300:
        return _out(np.ones_like(x))
    norm = np.log1p(8.0 * r * r / (4.0 - 9.0 * r * r))
    return _out(2.0 * r * r / ((r * x - (1.0 - r)) * (r * x - (1.0 + r))) / norm)


def w_density(y, x):
    """Density ``w_y(x) = (1 - y^2/4) / (1 - x y)^2`` on X."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return _out((1.0 - y * y / 4.0) / (1.0 - x * y) ** 2)


def w_mass(y, x0, x1):
    """``integral of w_y over [x0, x1]``, in a cancellation-free form."""
    y = np.asarray(y, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    return _out((1.0 - y * y / 4.0) * (x1 - x0) / ((1.0 - x0 * y) * (1.0 - x1 * y)))


def w_cdf(y, x):
    """Distribution function of ``w_y``: ``(1 - y/2)(x + 1/2) / (1 - x y)``."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return _out((1.0 - y / 2.0) * (x + 0.5) / (1.0 - x * y))


def _wbar_series(y):
    h = np.asarray(y, dtype=float) / 2.0
    h2 = h * h
    total = np.zeros_like(h)
    power = h.copy()
    k = 0
    while True:
        term = power / ((2 * k + 1) * (2 * k + 3))
        total = total + term
        if np.all(np.abs(term) < _SERIES_TERM_FLOOR):
            return total
        power = power * h2
        k += 1


def _wbar_closed(y):
    y = np.asarray(y, dtype=float)
    return (0.25 - 1.0 / (y * y)) * 2.0 * np.arctanh(y / 2.0) + 1.0 / y


def field_wbar(y):
    """Field (mean) of the density ``w_y``.

    Closed form ``(1/4 - 1/y^2) log((1+y/2)/(1-y/2)) + 1/y`` away from zero;
    the odd power series in ``y/2`` for ``|y| < 0.01``.
    """
    y = np.asarray(y, dtype=float)
    small = np.abs(y) < WBAR_SERIES_BELOW
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, _wbar_series(np.where(small, y, 0.0)), _wbar_closed(np.where(small, 1.0, y)))
    return _out(out)


_PSI_COEFFS = (1.0 / 6.0, 7.0 / 40.0, 461.0 / 2016.0, 4619.0 / 13440.0)


def _psi_series(r):
    r = np.asarray(r, dtype=float)
    r2 = r * r
    c1, c3, c5, c7 = _PSI_COEFFS
    return r * (c1 + r2 * (c3 + r2 * (c5 + r2 * c7)))


def _psi_closed(r):
    r = np.asarray(r, dtype=float)
    num = np.log1p(8.0 * r / (4.0 - 4.0 * r - 3.0 * r * r))
    den = np.log1p(-8.0 * r * r / (4.0 - r * r))
    return 1.0 / r + num / den


def psi(r):
    """Field of the invariant density, ``phi(u_r)``.

    Uses the closed form for ``|r| >= 0.02`` and the 4-term odd series
    ``r/6 + 7r^3/40 + 461r^5/2016 + 4619r^7/13440`` below.
    """
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    small = a < PSI_SERIES_BELOW
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, _psi_series(a), _psi_closed(np.where(small, 1.0, a)))
    # evaluated on |r| so that psi is odd to the last bit
    return _out(np.copysign(out, r))


# Dual branches and weights.  Arguments broadcast: (r, y) may be arrays.

def sigma(r, y):
    """Dual of the lower branch: ``2 (y + r) / ((r + 1) y + r + 4)``."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out(2.0 * (y + r) / ((r + 1.0) * y + r + 4.0))


def tau(r, y):
    """Dual of the upper branch: ``2 (y + r) / ((r - 1) y - r + 4)``."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out(2.0 * (y + r) / ((r - 1.0) * y - r + 4.0))


def p_weight(r, y):
    """Probability of the sigma branch, ``1/2 - (r + y) / (4 + r y)``."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out(0.5 - (r + y) / (4.0 + r * y))


def q_weight(r, y):
    """``1 - p_r(y)``, evaluated as ``1/2 + (r + y)/(4 + r y)`` so that
    ``q_weight(r, y) == p_weight(-r, -y)`` holds exactly in floating point."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out(0.5 + (r + y) / (4.0 + r * y))


def sigma_prime(r, y):
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out(2.0 * (4.0 - r * r) / (r * y + y + r + 4.0) ** 2)


def tau_prime(r, y):
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out(2.0 * (4.0 - r * r) / (r * y - y - r + 4.0) ** 2)


def p_prime(r, y):
    """``d p_r / d y = -(4 - r^2) / (4 + r y)^2``."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out(-(4.0 - r * r) / (4.0 + r * y) ** 2)


def sigma_dr(r, y):
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out((8.0 - 2.0 * y * y) / (r * y + y + r + 4.0) ** 2)


def tau_dr(r, y):
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out((8.0 - 2.0 * y * y) / (r * y - y - r + 4.0) ** 2)


def p_dr(r, y):
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out((y * y - 4.0) / (r * y + 4.0) ** 2)
