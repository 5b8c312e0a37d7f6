"""Feedback functions, the bifurcation map H(r) = G(psi(r)) and regime analysis."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np

from .errors import NoRootInRange
from .site_maps import R_MAX, psi

H_STEP = 1e-4
BRACKET_LO = 1e-6
BIFURCATION_B = 6.0  # H'(0) = B / 6
# roundoff level of the stencils below; where tanh saturates H is flat to this level
FD_NOISE = 1e-7


class SShaped(Protocol):
    """What the rest of the package needs from a feedback function."""

    B: float

    def value(self, x): ...

    def prime(self, x): ...

    def second(self, x): ...


@dataclass(frozen=True)
class Feedback:
    """The tanh feedback ``G(x) = A tanh(B x / A)``.

    ``A`` bounds the produced parameter (so ``|G| <= A <= 0.4``) and ``B = G'(0)``
    is the coupling strength.
    """

    A: float = 0.4
    B: float = 8.0

    def __post_init__(self):
        if not 0.0 < self.A <= R_MAX:
            raise ValueError(f"A must lie in (0, {R_MAX}], got {self.A}")
        if self.B < 0.0:
            raise ValueError(f"B must be non-negative, got {self.B}")

    def value(self, x):
        return self.A * np.tanh(self.B / self.A * np.asarray(x, dtype=float))

    def prime(self, x):
        return self.B * _sech2(self.B / self.A * np.asarray(x, dtype=float))

    def second(self, x):
        u = self.B / self.A * np.asarray(x, dtype=float)
        return -2.0 * self.B * self.B / self.A * np.tanh(u) * _sech2(u)

    def log_slope(self, x):
        """``G''/G' = -2 (B/A) tanh(B x / A)``."""
        return -2.0 * self.B / self.A * np.tanh(self.B / self.A * np.asarray(x, dtype=float))

    def __call__(self, x):
        return g_eval(self, x)


def _sech2(u):
    e = np.exp(-2.0 * np.abs(u))
    return 4.0 * e / (1.0 + e) ** 2


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def g_eval(F: SShaped, x):
    return _out(F.value(x))


def g_prime(F: SShaped, x):
    return _out(F.prime(x))


@dataclass
class AssumptionReport:
    passed: bool
    margin: float
    detail: dict
    applicable: bool = True


def check_assumption_I(F: SShaped, n_grid: int = 10001) -> AssumptionReport:
    """Grid check of ``G'(x) <= 25 - 50 |G(x)|`` on X.

    ``margin`` is ``max(G' - 25 + 50 |G|)``; the check passes iff it is negative.
    """
    if n_grid < 2:
        raise ValueError("n_grid must be >= 2")
    x = np.linspace(-0.5, 0.5, n_grid)
    excess = F.prime(x) - 25.0 + 50.0 * np.abs(F.value(x))
    i = int(np.argmax(excess))
    margin = float(excess[i])
    return AssumptionReport(margin < 0.0, margin, {"argmax_x": float(x[i])})


def h_eval(F: SShaped, r):
    """``H(r) = G(psi(r))``, the parameter produced from the density u_r."""
    return _out(F.value(psi(r)))


def h_prime(F: SShaped, r, step: float = H_STEP):
    """Five-point centred difference of H."""
    r = np.asarray(r, dtype=float)
    d = (-h_eval(F, r + 2 * step) + 8 * h_eval(F, r + step) - 8 * h_eval(F, r - step)
         + h_eval(F, r - 2 * step)) / (12.0 * step)
    return _out(d)


def h_second(F: SShaped, r, step: float = H_STEP):
    """Second derivative of H: five-point stencil with one Richardson step."""
    def d2(h):
        return (-h_eval(F, r + 2 * h) + 16 * h_eval(F, r + h) - 30 * h_eval(F, r)
                + 16 * h_eval(F, r - h) - h_eval(F, r - 2 * h)) / (12.0 * h * h)

    r = np.asarray(r, dtype=float)
    coarse, fine = d2(2 * step), d2(step)
    return _out(fine + (fine - coarse) / 15.0)


def _psi_prime(r, step=H_STEP):
    return (-psi(r + 2 * step) + 8 * psi(r + step) - 8 * psi(r - step) + psi(r - 2 * step)) / (12 * step)


def check_assumption_II(F: SShaped, n_grid: int = 400) -> AssumptionReport:
    """Grid evidence that H has the stable/bistable fixed-point dichotomy on (0, 0.4].

    Requires ``H' > 0`` everywhere plus one of: ``H'' < 0`` (strict S-shape,
    reported as ``s_shaped``) or ``H' <= 1`` (so ``H(r) - r`` is monotone and 0 is
    the only fixed point).  For weak coupling H is in fact convex near 0, so the
    second branch is what certifies small B.  The two sufficient conditions
    ``G'(x) <= 1/psi'(6x)`` and ``G''/G' <= -(189/5) 6x`` are evaluated on the
    same grid and reported in ``detail`` only.
    """
    if n_grid < 3:
        raise ValueError("n_grid must be >= 3")
    if F.B == 0.0:
        return AssumptionReport(True, 0.0, {"reason": "G vanishes identically"}, applicable=False)
    # keep the stencil inside (0, R_MAX]; H is odd so the left end is a mirror
    r = np.linspace(R_MAX / n_grid, R_MAX - 2 * H_STEP, n_grid)
    hp = h_prime(F, r)
    hpp = h_second(F, r)
    increasing = bool(np.all(hp > -FD_NOISE))
    s_shaped = bool(np.all(hpp < FD_NOISE))
    weak = bool(np.all(hp <= 1.0))
    passed = increasing and (s_shaped or weak)

    xs = np.linspace(0.0, 0.5, n_grid + 1)[1:]
    inside = 6.0 * xs <= R_MAX - 2 * H_STEP
    cond_a = np.ones_like(xs, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond_a[inside] = F.prime(xs[inside]) <= 1.0 / _psi_prime(6.0 * xs[inside])
    if hasattr(F, "log_slope"):
        log_slope = F.log_slope(xs)
    else:
        log_slope = F.second(xs) / F.prime(xs)
    cond_b = log_slope <= -(189.0 / 5.0) * 6.0 * xs
    detail = {
        "s_shaped": s_shaped,
        "h_prime_at_most_one": weak,
        "min_h_prime": float(hp.min()),
        "max_h_prime": float(hp.max()),
        "max_h_second": float(hpp.max()),
        "sufficient_conditions_hold": bool(np.all(cond_a | cond_b)),
    }
    margin = float(hpp.max()) if s_shaped else float(hp.max() - 1.0)
    return AssumptionReport(passed, margin, detail)


class RegimeKind(str, Enum):
    STABLE = "Stable"
    BISTABLE = "Bistable"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    r_star: float


def _bisect(f, lo, hi, xtol):
    flo, fhi = f(lo), f(hi)
    if not (flo > 0.0 > fhi):
        raise NoRootInRange(f"H(r)-r has no sign change on [{lo}, {hi}]: {flo}, {fhi}")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if fm > 0.0:
            lo = mid
        else:
            hi = mid
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def classify_regime(F: SShaped, xtol: float = 1e-15) -> Regime:
    """Stable (``r* = 0``) iff ``B <= 6``; otherwise bisect ``H(r) = r`` on ``(0, 0.4]``."""
    if F.B <= BIFURCATION_B:
        return Regime(RegimeKind.STABLE, 0.0)
    r_star = _bisect(lambda r: h_eval(F, r) - r, BRACKET_LO, R_MAX, xtol)
    return Regime(RegimeKind.BISTABLE, float(r_star))
