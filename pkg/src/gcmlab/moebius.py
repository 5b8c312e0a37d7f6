"""Fractional-linear (Moebius) maps in their 2x2 matrix representation.

A matrix ``[[a, b], [c, d]]`` acts on the real line by ``x -> (a x + b) / (c x + d)``.
Composition of maps corresponds to the matrix product, which is what makes
this representation convenient for the piecewise fractional-linear site maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PoleAtPoint

# |c x + d| below POLE_RTOL * max|coef| counts as a pole
POLE_RTOL = 1e-14


@dataclass(frozen=True)
class Moebius:
    """Real fractional-linear map with (unnormalised) coefficients a, b, c, d."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if self.det == 0.0:
            raise ValueError(f"degenerate Moebius matrix {self.as_array().tolist()}")

    @classmethod
    def from_array(cls, m) -> "Moebius":
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @classmethod
    def identity(cls) -> "Moebius":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def _denominator(self, x):
        den = self.c * np.asarray(x, dtype=float) + self.d
        scale = max(abs(self.a), abs(self.b), abs(self.c), abs(self.d))
        if np.any(np.abs(den) < POLE_RTOL * scale):
            raise PoleAtPoint(f"{self} evaluated at its pole x = {-self.d / self.c!r}")
        return den

    def __call__(self, x):
        return apply(self, x)

    def __matmul__(self, other: "Moebius") -> "Moebius":
        return compose(self, other)

    def inverse(self) -> "Moebius":
        # adjugate; the 1/det factor cancels in the action
        return Moebius(self.d, -self.b, -self.c, self.a)


def _scalar_if_0d(v):
    return float(v) if np.ndim(v) == 0 else v


def apply(m: Moebius, x):
    """Evaluate ``(a x + b) / (c x + d)``; works elementwise on arrays."""
    den = m._denominator(x)
    return _scalar_if_0d((m.a * np.asarray(x, dtype=float) + m.b) / den)


def derivative(m: Moebius, x):
    """Derivative ``(ad - bc) / (c x + d)^2``."""
    den = m._denominator(x)
    return _scalar_if_0d(m.det / den**2)


def compose(m: Moebius, n: Moebius) -> Moebius:
    """Matrix product ``m n``, i.e. the map ``x -> m(n(x))``."""
    return Moebius(
        m.a * n.a + m.b * n.c,
        m.a * n.b + m.b * n.d,
        m.c * n.a + m.d * n.c,
        m.c * n.b + m.d * n.d,
    )


def dual(m: Moebius) -> Moebius:
    """Conjugate by the swap matrix: ``[[a, b], [c, d]] -> [[d, c], [b, a]]``.

    As maps, ``dual(m)(y) == 1 / m(1 / y)``.  Transfer operators of ``m`` act on
    the densities ``w_y`` through this dual.
    """
    return Moebius(m.d, m.c, m.b, m.a)
