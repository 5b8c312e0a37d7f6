"""Ulam discretisation of the transfer operators on a uniform partition of X.

This is the grid-side oracle for the measure-valued IFS: any density (not
only those represented by measures on Y) can be pushed forward here.  Matrix
entries are exact, computed from the two fractional-linear inverse branches.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coupling import SShaped, g_eval, g_prime
from .errors import NoConvergence, ShapeMismatch
from .moebius import apply
from .site_maps import M_r, N_r

CACHE_RESOLUTION = 1e-6
MEAN_TOL = 1e-10
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


def bin_edges(n_bins: int) -> np.ndarray:
    return -0.5 + np.arange(n_bins + 1) / n_bins


def bin_midpoints(n_bins: int) -> np.ndarray:
    return -0.5 + (np.arange(n_bins) + 0.5) / n_bins


def cell_averages(f, n_bins: int) -> np.ndarray:
    """Gauss-Legendre averages of ``f`` over each bin (f must broadcast)."""
    e = bin_edges(n_bins)
    mid = 0.5 * (e[:-1] + e[1:])[:, None]
    x = mid + 0.5 / n_bins * _GAUSS_NODES[None, :]
    return 0.5 * np.asarray(f(x), dtype=float) @ _GAUSS_WEIGHTS


class GridDensity:
    """Probability density, piecewise constant on ``n_bins`` equal bins of X."""

    __slots__ = ("values",)

    def __init__(self, values, *, validate: bool = True):
        v = np.array(values, dtype=float, ndmin=1)
        if validate:
            if v.ndim != 1 or v.size < 2:
                raise ValueError("need a 1-d array of at least 2 bin values")
            if np.any(v < 0):
                raise ValueError("density values must be non-negative")
            if abs(v.mean() - 1.0) > MEAN_TOL:
                raise ValueError(f"density must integrate to 1, got {v.mean()!r}")
        v.flags.writeable = False
        self.values = v

    @property
    def n_bins(self) -> int:
        return self.values.size

    @classmethod
    def uniform(cls, n_bins: int) -> "GridDensity":
        return cls(np.ones(n_bins))

    @classmethod
    def from_function(cls, f, n_bins: int) -> "GridDensity":
        """Cell averages of ``f``, renormalised to unit mass."""
        v = cell_averages(f, n_bins)
        return cls(v / v.mean())

    def field(self) -> float:
        return field_of_grid(self.values)

    def __repr__(self):
        return f"GridDensity(n_bins={self.n_bins}, field={self.field():.6g})"


def field_of_grid(values) -> float:
    """Midpoint-rule mean, exact for piecewise-constant densities."""
    v = np.asarray(values, dtype=float)
    return float(v @ bin_midpoints(v.size) / v.size)


@dataclass(frozen=True)
class UlamMatrix:
    """Row-stochastic ``P[i, j] = lambda(I_i & T_r^-1 I_j) / lambda(I_i)``."""

    r: float
    matrix: sp.csr_matrix

    @property
    def n_bins(self) -> int:
        return self.matrix.shape[0]

    def push(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_bins,):
            raise ShapeMismatch(f"vector of shape {values.shape} for a {self.n_bins}-bin matrix")
        return self.matrix.T @ values


def build_ulam(r: float, n_bins: int) -> UlamMatrix:
    """Exact Ulam matrix of ``T_r`` on ``n_bins`` equal bins.

    Each target bin pulls back under both inverse branches to an interval of
    length at most ``3/(4 n)`` (branch expansion is at least 4/3 on R), so it
    meets at most two source bins.
    """
    r = float(r)
    if abs(r) > 0.4 + 1e-12:
        raise ValueError(f"|r| must be <= 0.4, got {r}")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    e = bin_edges(n_bins)
    rows, cols, vals = [], [], []
    j = np.arange(n_bins)
    for branch in (M_r(r).inverse(), N_r(r).inverse()):
        pre = np.asarray(apply(branch, e), dtype=float)
        lo, hi = pre[:-1], pre[1:]
        i0 = np.clip(np.floor((lo + 0.5) * n_bins).astype(np.int64), 0, n_bins - 1)
        i1 = np.clip(np.floor((hi + 0.5) * n_bins).astype(np.int64), 0, n_bins - 1)
        # an endpoint that is exactly a bin edge belongs to the bin on its left
        i1 = np.where((i1 > i0) & (e[i1] >= hi), i1 - 1, i1)
        if np.any(i1 - i0 > 1):
            raise AssertionError("preimage interval spans more than two bins")
        split = e[np.minimum(i0 + 1, n_bins)]
        one = i0 == i1
        rows += [i0[one], i0[~one], i1[~one]]
        cols += [j[one], j[~one], j[~one]]
        vals += [(hi - lo)[one], (split - lo)[~one], (hi - split)[~one]]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals) * n_bins
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n_bins, n_bins))
    return UlamMatrix(r, m)


class UlamCache:
    """Matrices keyed by ``(round(r / resolution), n_bins)``; safe to share between threads."""

    def __init__(self, resolution: float = CACHE_RESOLUTION, max_entries: int = 256):
        self.resolution = resolution
        self.max_entries = max_entries
        self._store: dict[tuple[int, int], UlamMatrix] = {}
        self._lock = threading.Lock()

    def get(self, r: float, n_bins: int) -> UlamMatrix:
        key = (int(round(r / self.resolution)), n_bins)
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return hit
        mat = build_ulam(key[0] * self.resolution, n_bins)
        with self._lock:
            if len(self._store) >= self.max_entries:
                self._store.pop(next(iter(self._store)))
            return self._store.setdefault(key, mat)

    def clear(self):
        with self._lock:
            self._store.clear()


default_cache = UlamCache()


def apply_pfo(M: UlamMatrix, u: GridDensity) -> GridDensity:
    """Transfer operator on grid densities; mass is preserved by row-stochasticity."""
    if u.n_bins != M.n_bins:
        raise ShapeMismatch(f"{u.n_bins}-bin density for a {M.n_bins}-bin matrix")
    return GridDensity(M.push(u.values), validate=False)


def apply_self_consistent_pfo(F: SShaped, u: GridDensity, cache: UlamCache | None = default_cache):
    """``P~u = P_{G(phi(u))} u``; returns the image and the parameter used.

    With a cache the parameter is quantised to its resolution; ``cache=None``
    builds the exact matrix.
    """
    r = float(g_eval(F, u.field()))
    M = build_ulam(r, u.n_bins) if cache is None else cache.get(r, u.n_bins)
    return apply_pfo(M, u), M.r


def l1_distance(u: GridDensity, v: GridDensity) -> float:
    if u.n_bins != v.n_bins:
        raise ShapeMismatch(f"{u.n_bins} vs {v.n_bins} bins")
    return float(np.abs(u.values - v.values).sum() / u.n_bins)


def linearization_eigenvalue(B: float, n_bins: int = 1024, max_iter: int = 10_000, tol: float = 1e-13,
                             return_vector: bool = False, seed: int = 0):
    """Dominant eigenvalue of ``Q = P_0 + B [x] (x) phi`` on mean-zero grid functions.

    ``Q`` is the derivative of the self-consistent operator at ``u = 1``.
    Power iteration from a random mean-zero start; the eigenvalue is the
    Rayleigh quotient at convergence.
    """
    if B <= 0:
        raise ValueError("B must be positive")
    if n_bins < 64:
        raise ValueError("n_bins must be >= 64")
    P0 = build_ulam(0.0, n_bins)
    x = bin_midpoints(n_bins)

    def Q(f):
        return P0.push(f) + B * x * (x @ f / n_bins)

    f = np.random.default_rng(seed).standard_normal(n_bins)
    f -= f.mean()
    f /= np.linalg.norm(f)
    lam = 0.0
    for _ in range(max_iter):
        g = Q(f)
        g -= g.mean()
        new = float(f @ g)
        norm = np.linalg.norm(g)
        if norm == 0.0:
            raise NoConvergence("power iteration collapsed to zero")
        g /= norm
        if abs(new - lam) < tol * max(1.0, abs(new)) and np.linalg.norm(g - f) < 1e-9:
            return (new, g) if return_vector else new
        f, lam = g, new
    raise NoConvergence(f"power iteration did not converge in {max_iter} steps")


def _grid_derivative(values: np.ndarray) -> np.ndarray:
    # centred inside, one-sided at the two boundary bins
    return np.gradient(values, 1.0 / values.size, edge_order=1)


def gateaux_check(F: SShaped, u: GridDensity, g, tau: float = 1e-4) -> float:
    """L1 gap between a difference quotient of ``P~`` and its predicted derivative.

    The prediction is ``P_r g + G'(phi(u)) phi(g) P_r((u v_r)')`` with
    ``r = G(phi(u))`` and ``v_r(x) = (4x^2 - 1)/(4 - r^2)``.  Matrices are built
    exactly (no parameter quantisation), which a difference quotient needs.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (u.n_bins,):
        raise ShapeMismatch(f"perturbation of shape {g.shape} for {u.n_bins} bins")
    n = u.n_bins
    base, r = apply_self_consistent_pfo(F, u, cache=None)
    moved = GridDensity(u.values + tau * g, validate=False)
    pert, _ = apply_self_consistent_pfo(F, moved, cache=None)
    quotient = (pert.values - base.values) / tau

    P = build_ulam(r, n)
    x = bin_midpoints(n)
    v = (4.0 * x * x - 1.0) / (4.0 - r * r)
    w = P.push(_grid_derivative(u.values * v))
    predicted = P.push(g) + w * g_prime(F, u.field()) * field_of_grid(g)
    return float(np.abs(quotient - predicted).sum() / n)
