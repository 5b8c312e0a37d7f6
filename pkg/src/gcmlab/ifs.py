"""Self-consistent transfer operator as an iterated function system on measures.

A density ``u = integral of w_y dmu(y)`` is stored through its representing
measure ``mu`` on ``Y``.  The transfer operator ``P_r`` acts on ``mu`` by the
place-dependent IFS ``L*_r``: an atom at ``y`` with weight ``w`` goes to
``sigma_r(y)`` with weight ``w p_r(y)`` and to ``tau_r(y)`` with the rest.
Atom counts double each step, so every step is followed by coalescing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numba
import numpy as np

from .coupling import SShaped, classify_regime, g_eval
from .errors import FieldOutOfDomain
from .site_maps import (R_MAX, Y_HI, Y_LO, delta_r, field_wbar, gamma_r, p_dr, p_prime, p_weight,
                        q_weight, sigma, sigma_dr, sigma_prime, tau, tau_dr, tau_prime)

log = logging.getLogger(__name__)

EPS_MERGE = 1e-10
MAX_ATOMS = 1_000_000
ORDER_SLACK = 1e-14
MASS_RTOL = 1e-12
LABEL_ATOMS = 10_000
# discretising mu_r with 10^4 atoms costs ~|Y_r|/(4n) ~ 5e-6 in Wasserstein,
# so proximity to it cannot be asked finer than this
LABEL_FLOOR = 1e-4
_Y_SLACK = 1e-12


# ---------------------------------------------------------------------------
# compiled kernels

@numba.njit(cache=True)
def _merge_sorted(ya, wa, yb, wb):
    na, nb = ya.size, yb.size
    y = np.empty(na + nb)
    w = np.empty(na + nb)
    i = j = k = 0
    while i < na and j < nb:
        if ya[i] <= yb[j]:
            y[k] = ya[i]
            w[k] = wa[i]
            i += 1
        else:
            y[k] = yb[j]
            w[k] = wb[j]
            j += 1
        k += 1
    while i < na:
        y[k] = ya[i]
        w[k] = wa[i]
        i += 1
        k += 1
    while j < nb:
        y[k] = yb[j]
        w[k] = wb[j]
        j += 1
        k += 1
    return y, w


@numba.njit(cache=True)
def _bary(sy, sw, first, last):
    # a run of coincident atoms keeps its position exactly; rounding never leaves the run
    if first == last:
        return first
    return min(max(sy / sw, first), last)


@numba.njit(cache=True)
def _coalesce_kernel(y, w, eps):
    """Greedy run merging, run from both ends towards zero.

    Negative atoms are grouped left to right, positive atoms right to left,
    and the two innermost groups (with any atoms at exactly 0) are joined if
    they fit in ``eps``.  Sums inside a group are taken from the outside in,
    so a mirror-symmetric input gives an exactly mirror-symmetric output.
    """
    n = y.size
    out_y = np.empty(n)
    out_w = np.empty(n)
    if n == 0:
        return out_y, out_w
    neg = 0
    while neg < n and y[neg] < 0.0:
        neg += 1
    pos = neg
    while pos < n and y[pos] == 0.0:
        pos += 1
    # left runs: starts of runs over [0, neg)
    lstart = np.empty(neg + 1, dtype=np.int64)
    nl = 0
    i = 0
    while i < neg:
        lstart[nl] = i
        nl += 1
        j = i + 1
        while j < neg and y[j] - y[i] <= eps:
            j += 1
        i = j
    lstart[nl] = neg
    # right runs, scanned from the right over [pos, n)
    rend = np.empty(n - pos + 1, dtype=np.int64)  # exclusive ends, outermost first
    nr = 0
    i = n
    while i > pos:
        rend[nr] = i
        nr += 1
        j = i - 1  # y[i-1] is the anchor
        while j > pos and y[i - 1] - y[j - 1] <= eps:
            j -= 1
        i = j
    rend[nr] = pos

    # inner groups: last left run [lstart[nl-1], neg), zeros [neg, pos), last right run [pos, rend[nr-1])
    lo = lstart[nl - 1] if nl > 0 else neg
    hi = rend[nr - 1] if nr > 0 else pos
    join = hi > lo and y[hi - 1] - y[lo] <= eps
    k = 0
    nl_out = nl - 1 if (join and nl > 0) else nl
    for m in range(nl_out):
        a, b = lstart[m], lstart[m + 1]
        sw = 0.0
        sy = 0.0
        for t in range(a, b):
            sw += w[t]
            sy += w[t] * y[t]
        out_y[k] = _bary(sy, sw, y[a], y[b - 1])
        out_w[k] = sw
        k += 1
    if join:
        # pair atoms from both ends of [lo, hi), outermost first
        sw = 0.0
        sy = 0.0
        a, b = lo, hi - 1
        while a < b:
            sw += w[a] + w[b]
            sy += w[a] * y[a] + w[b] * y[b]
            a += 1
            b -= 1
        if a == b:
            sw += w[a]
            sy += w[a] * y[a]
        bary = _bary(sy, sw, y[lo], y[hi - 1])
        if bary == 0.0:
            bary = 0.0  # no negative zero
        out_y[k] = bary
        out_w[k] = sw
        k += 1
    else:
        if pos > neg:
            sw = 0.0
            a, b = neg, pos - 1
            while a < b:
                sw += w[a] + w[b]
                a += 1
                b -= 1
            if a == b:
                sw += w[a]
            out_y[k] = 0.0
            out_w[k] = sw
            k += 1
    nr_out = nr - 1 if (join and nr > 0) else nr
    for m in range(nr_out - 1, -1, -1):
        b, a = rend[m], rend[m + 1]
        sw = 0.0
        sy = 0.0
        for t in range(b - 1, a - 1, -1):
            sw += w[t]
            sy += w[t] * y[t]
        out_y[k] = _bary(sy, sw, y[a], y[b - 1])
        out_w[k] = sw
        k += 1
    return out_y[:k], out_w[:k]


@numba.njit(cache=True)
def _cdf_gap_terms(ya, wa, yb, wb):
    """Merged support and ``F_a - F_b`` just right of each merged point."""
    na, nb = ya.size, yb.size
    pts = np.empty(na + nb)
    diff = np.empty(na + nb)
    i = j = k = 0
    d = 0.0
    while i < na or j < nb:
        if j >= nb or (i < na and ya[i] < yb[j]):
            x = ya[i]
            d += wa[i]
            i += 1
        elif i >= na or yb[j] < ya[i]:
            x = yb[j]
            d -= wb[j]
            j += 1
        else:
            x = ya[i]
            d += wa[i] - wb[j]
            i += 1
            j += 1
        pts[k] = x
        diff[k] = d
        k += 1
    return pts[:k], diff[:k]


@numba.njit(cache=True)
def _cumulative_pair_sums(ya, wa, yb, wb):
    # running masses F_a, F_b right of each merged point, compensated so the
    # comparison stays at rounding level for 10^6 atoms
    na, nb = ya.size, yb.size
    fa = np.empty(na + nb)
    fb = np.empty(na + nb)
    i = j = k = 0
    sa = ca = sb = cb = 0.0
    while i < na or j < nb:
        take_a = take_b = False
        if j >= nb or (i < na and ya[i] < yb[j]):
            take_a = True
        elif i >= na or yb[j] < ya[i]:
            take_b = True
        else:
            take_a = take_b = True
        if take_a:
            v = wa[i] - ca
            t = sa + v
            ca = (t - sa) - v
            sa = t
            i += 1
        if take_b:
            v = wb[j] - cb
            t = sb + v
            cb = (t - sb) - v
            sb = t
            j += 1
        fa[k] = sa
        fb[k] = sb
        k += 1
    return fa[:k], fb[:k]


@numba.njit(cache=True)
def _cell_masses(y, w, edges):
    nb = edges.size - 1
    out = np.zeros(nb)
    for i in range(y.size):
        yi = y[i]
        c = w[i] * (1.0 - yi * yi / 4.0)
        for k in range(nb):
            x0 = edges[k]
            x1 = edges[k + 1]
            out[k] += c * (x1 - x0) / ((1.0 - x0 * yi) * (1.0 - x1 * yi))
    return out


@numba.njit(cache=True)
def _mirror_sum(v):
    # outside-in pairing (exact zero for odd-symmetric v), compensated
    s = 0.0
    c = 0.0
    a, b = 0, v.size - 1
    while a <= b:
        x = v[a] + v[b] if a < b else v[a]
        x -= c
        t = s + x
        c = (t - s) - x
        s = t
        a += 1
        b -= 1
    return s


# ---------------------------------------------------------------------------
# measures

class AtomicMeasure:
    """Finitely supported probability measure on Y.

    ``positions`` is strictly increasing, ``weights`` positive and summing to
    one.  Both arrays are read-only; operations return new measures.
    """

    __slots__ = ("positions", "weights")

    def __init__(self, positions, weights, *, validate: bool = True):
        y = np.array(positions, dtype=float, ndmin=1)
        w = np.array(weights, dtype=float, ndmin=1)
        if validate:
            _validate(y, w)
        y.flags.writeable = False
        w.flags.writeable = False
        self.positions = y
        self.weights = w

    @classmethod
    def from_atoms(cls, positions, weights) -> "AtomicMeasure":
        """Build from unsorted atoms, merging duplicates and normalising."""
        y = np.asarray(positions, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if y.shape != w.shape or y.size == 0:
            raise ValueError("positions and weights must be non-empty and of equal length")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        keep = w > 0
        order = np.argsort(y[keep], kind="stable")
        y, w = y[keep][order], w[keep][order]
        y, w = _coalesce_kernel(y, w, 0.0)
        return cls(y, w / w.sum())

    @classmethod
    def delta(cls, y0: float) -> "AtomicMeasure":
        return cls([y0], [1.0])

    @classmethod
    def symmetric_pair(cls, y0: float, w_right: float = 0.5) -> "AtomicMeasure":
        if y0 == 0.0:
            return cls.delta(0.0)
        y0 = abs(y0)
        return cls([-y0, y0], [1.0 - w_right, w_right])

    @property
    def size(self) -> int:
        return self.positions.size

    def __len__(self):
        return self.size

    def __repr__(self):
        if self.size <= 4:
            atoms = ", ".join(f"({y:.6g}, {w:.6g})" for y, w in zip(self.positions, self.weights))
            return f"AtomicMeasure([{atoms}])"
        return f"AtomicMeasure(<{self.size} atoms on [{self.positions[0]:.6g}, {self.positions[-1]:.6g}]>)"

    def mean(self) -> float:
        return float(_mirror_sum(self.weights * self.positions))

    def support(self) -> tuple[float, float]:
        return float(self.positions[0]), float(self.positions[-1])

    def radius(self) -> float:
        return float(max(-self.positions[0], self.positions[-1]))

    def mirror(self) -> "AtomicMeasure":
        return AtomicMeasure(-self.positions[::-1], self.weights[::-1], validate=False)


def _validate(y, w):
    if y.ndim != 1 or y.shape != w.shape or y.size == 0:
        raise ValueError("positions and weights must be non-empty 1-d arrays of equal length")
    if np.any(np.diff(y) <= 0):
        raise ValueError("positions must be strictly increasing")
    if y[0] < Y_LO - _Y_SLACK or y[-1] > Y_HI + _Y_SLACK:
        raise ValueError(f"positions must lie in [{Y_LO}, {Y_HI}]")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if abs(w.sum() - 1.0) > MASS_RTOL * max(1, y.size) ** 0.5 + MASS_RTOL:
        raise ValueError(f"total mass {w.sum()!r} is not 1")


def field_of_measure(mu: AtomicMeasure) -> float:
    """Field of the density represented by ``mu``: ``sum w_i wbar(y_i)``."""
    return float(_mirror_sum(mu.weights * np.asarray(field_wbar(mu.positions))))


def density_from_measure(mu: AtomicMeasure, x):
    """Point values of ``u = sum w_i w_{y_i}``."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    out = np.zeros(flat.shape)
    chunk = max(1, 2_000_000 // max(flat.size, 1))
    for s in range(0, mu.size, chunk):
        y = mu.positions[s:s + chunk, None]
        out += np.sum(mu.weights[s:s + chunk, None] * (1.0 - y * y / 4.0) / (1.0 - flat[None, :] * y) ** 2, axis=0)
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def cell_averages_from_measure(mu: AtomicMeasure, n_bins: int) -> np.ndarray:
    """Exact averages of the represented density over ``n_bins`` equal cells of X."""
    edges = np.linspace(-0.5, 0.5, n_bins + 1)
    return _cell_masses(np.ascontiguousarray(mu.positions), np.ascontiguousarray(mu.weights), edges) * n_bins


def coalesce(mu: AtomicMeasure, eps_merge: float = EPS_MERGE, max_atoms: int = MAX_ATOMS) -> AtomicMeasure:
    """Merge runs of neighbouring atoms of span ``<= eps_merge`` into their barycentres.

    Mass and first moment are kept; each atom moves by at most ``eps_merge``.
    If the result still has more than ``max_atoms`` atoms, ``eps_merge`` is
    doubled until it does not.
    """
    if eps_merge < 0:
        raise ValueError("eps_merge must be >= 0")
    y, w, _ = _coalesce_arrays(mu.positions, mu.weights, eps_merge, max_atoms)
    return AtomicMeasure(y, w, validate=False)


def _coalesce_arrays(y, w, eps, max_atoms):
    """Coalesce at ``eps``, coarsening past the atom cap; returns the eps used."""
    y = np.ascontiguousarray(y)
    w = np.ascontiguousarray(w)
    cy, cw = _coalesce_kernel(y, w, eps)
    if cy.size <= max_atoms:
        return cy, cw, eps
    # equal spacing at the cap is the first guess, doubled until it fits
    e = max(eps, (y[-1] - y[0]) / max_atoms, 1e-16)
    cy, cw = _coalesce_kernel(y, w, e)
    while cy.size > max_atoms:
        e *= 2.0
        cy, cw = _coalesce_kernel(y, w, e)
    log.debug("atom cap %d exceeded: merged at eps=%.3g, %d -> %d atoms", max_atoms, e, y.size, cy.size)
    return cy, cw, e


def _split(r: float, mu: AtomicMeasure):
    y, w = mu.positions, mu.weights
    ys = np.asarray(sigma(r, y), dtype=float)
    yt = np.asarray(tau(r, y), dtype=float)
    ws = w * p_weight(r, y)
    wt = w * q_weight(r, y)
    # the branch weights vanish only at the ends of (-2, 2); keep atoms positive
    ks, kt = ws > 0, wt > 0
    return _merge_sorted(ys[ks], ws[ks], yt[kt], wt[kt])


def apply_L(r: float, mu: AtomicMeasure) -> AtomicMeasure:
    """One step of the IFS ``L*_r``; coincident images are merged, nothing else."""
    y, w = _split(float(r), mu)
    y, w = _coalesce_kernel(y, w, 0.0)
    return AtomicMeasure(y, w, validate=False)


def r_of_measure(F: SShaped, mu: AtomicMeasure, t: float = 0.0) -> float:
    phi = field_of_measure(mu) + t
    if abs(phi) > 0.5:
        raise FieldOutOfDomain(f"field {phi!r} outside [-1/2, 1/2]")
    return float(g_eval(F, phi))


def apply_self_consistent(F: SShaped, mu: AtomicMeasure, eps_merge: float = EPS_MERGE,
                          max_atoms: int = MAX_ATOMS) -> AtomicMeasure:
    """``L~* mu = L*_{r_mu} mu`` with ``r_mu = G(field(mu))``, then coalesced."""
    return apply_self_consistent_noisy(F, mu, 0.0, eps_merge, max_atoms)


def apply_self_consistent_noisy(F: SShaped, mu: AtomicMeasure, t: float, eps_merge: float = EPS_MERGE,
                                max_atoms: int = MAX_ATOMS) -> AtomicMeasure:
    """As :func:`apply_self_consistent` with the parameter ``G(field + t)``."""
    return _step(F, mu, t, eps_merge, max_atoms)[0]


def _step(F, mu, t, eps_merge, max_atoms):
    r = r_of_measure(F, mu, t)
    y, w = _split(r, mu)
    y, w, eps_used = _coalesce_arrays(y, w, eps_merge, max_atoms)
    # p + q = 1 only to rounding; a common rescaling keeps mirror symmetry
    w /= _mirror_sum(w)
    return AtomicMeasure(y, w, validate=False), r, eps_used


def wasserstein(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """Exact ``integral |F_mu - F_nu|`` over the merged support."""
    pts, diff = _cdf_gap_terms(mu.positions, mu.weights, nu.positions, nu.weights)
    if pts.size < 2:
        return 0.0
    return float(np.sum(np.abs(diff[:-1]) * np.diff(pts)))


class Order(str, Enum):
    LESS = "Less"
    GREATER = "Greater"
    EQUAL = "Equal"
    INCOMPARABLE = "Incomparable"


def _same_atoms(mu, nu, tol=ORDER_SLACK):
    a = coalesce(mu, tol)
    b = coalesce(nu, tol)
    return (a.size == b.size and np.allclose(a.positions, b.positions, rtol=0, atol=tol)
            and np.allclose(a.weights, b.weights, rtol=0, atol=tol))


def order_compare(mu: AtomicMeasure, nu: AtomicMeasure, slack: float = ORDER_SLACK) -> Order:
    """Stochastic order: ``mu <= nu`` iff ``F_mu >= F_nu`` everywhere."""
    fa, fb = _cumulative_pair_sums(mu.positions, mu.weights, nu.positions, nu.weights)
    d = fa - fb
    less = bool(np.all(d >= -slack))
    greater = bool(np.all(d <= slack))
    if less and greater:
        if _same_atoms(mu, nu):
            return Order.EQUAL
        return Order.LESS if mu.mean() <= nu.mean() else Order.GREATER
    if less:
        return Order.LESS
    if greater:
        return Order.GREATER
    return Order.INCOMPARABLE


def mu_r_measure(r: float, n_atoms: int = LABEL_ATOMS) -> AtomicMeasure:
    """Equal-mass discretisation of the representing measure of ``u_r``.

    The measure has density proportional to ``1/(1 - y^2/4)`` on
    ``[gamma_r, delta_r]``; its distribution function is affine in
    ``atanh(y/2)``, so cells are equal steps there.  Each atom sits at its
    cell's conditional mean.
    """
    r = float(r)
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    if r == 0.0:
        return AtomicMeasure.delta(0.0)
    if abs(r) > R_MAX:
        raise ValueError(f"|r| must be <= {R_MAX}")
    if r < 0:
        return mu_r_measure(-r, n_atoms).mirror()
    lo, hi = np.arctanh(gamma_r(r) / 2.0), np.arctanh(delta_r(r) / 2.0)
    t = lo + (hi - lo) * np.arange(n_atoms + 1) / n_atoms
    t[-1] = hi
    e = 2.0 * np.tanh(t)
    y0, y1 = e[:-1], e[1:]
    # cell integrals of y/(1-y^2/4) and 1/(1-y^2/4), written without cancellation
    num = -2.0 * np.log1p((y0 * y0 - y1 * y1) / 4.0 / (1.0 - y0 * y0 / 4.0))
    den = 2.0 * np.arctanh((y1 - y0) / 2.0 / (1.0 - y0 * y1 / 4.0))
    y = np.clip(num / den, y0, y1)
    return AtomicMeasure(y, np.full(n_atoms, 1.0 / n_atoms))


# ---------------------------------------------------------------------------
# support tracking

@dataclass(frozen=True)
class SupportTrack:
    """Enclosing interval ``[a, b]`` of the support, pushed by the extreme branches."""

    a: float = Y_LO
    b: float = Y_HI

    def __post_init__(self):
        if not (Y_LO - _Y_SLACK <= self.a <= self.b <= Y_HI + _Y_SLACK):
            raise ValueError(f"invalid support interval [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a


def support_step(track: SupportTrack, r: float) -> SupportTrack:
    """``(a, b) -> (sigma_r(a), tau_r(b))``."""
    return SupportTrack(float(sigma(r, track.a)), float(tau(r, track.b)))


# ---------------------------------------------------------------------------
# Lipschitz constants

def _kappa_terms(n_grid):
    r = np.linspace(-R_MAX, R_MAX, n_grid)[:, None]
    y = np.linspace(Y_LO, Y_HI, n_grid)[None, :]
    s, t, p = sigma(r, y), tau(r, y), p_weight(r, y)
    k1a = np.abs((t - s) * p_prime(r, y))
    k1b = np.abs(sigma_prime(r, y) * p + tau_prime(r, y) * (1.0 - p))
    k2a = np.abs(sigma_dr(r, y) * p)
    k2b = np.abs(tau_dr(r, y) * (1.0 - p))
    k2c = np.abs((t - s) * p_dr(r, y))
    return k1a, k1b, k2a, k2b, k2c


def estimate_kappas(n_grid: int = 2000, joint: bool = False) -> tuple[float, float]:
    """Grid maxima of the two Lipschitz constants of ``(r, mu) -> L*_r mu``.

    By default each sup norm (over y) is taken separately and the norms summed,
    then maximised over r.  ``joint=True`` takes the sup of the pointwise sum
    instead, which is never larger.
    """
    if n_grid < 100:
        raise ValueError("n_grid must be >= 100")
    k1a, k1b, k2a, k2b, k2c = _kappa_terms(n_grid)
    if joint:
        return float((k1a + k1b).max()), float((k2a + k2b + k2c).max())
    kappa1 = (k1a.max(axis=1) + k1b.max(axis=1)).max()
    kappa2 = (k2a.max(axis=1) + k2b.max(axis=1) + k2c.max(axis=1)).max()
    return float(kappa1), float(kappa2)


# ---------------------------------------------------------------------------
# long-term behaviour

class Limit(str, Enum):
    MU_MINUS = "MuMinus"
    DELTA0 = "Delta0"
    MU_PLUS = "MuPlus"
    UNRESOLVED = "Unresolved"


@dataclass
class TraceRow:
    n: int
    r: float
    field: float
    a: float
    b: float
    wasserstein_step: float
    order_vs_delta0: str


@dataclass
class OrbitResult:
    limit: AtomicMeasure
    label: Limit
    trace: list[TraceRow] = field(default_factory=list)
    converged: bool = False
    predicted: Limit = Limit.UNRESOLVED  # from the order relation with delta_0 along the orbit
    distance_to_label: float = float("nan")


def label_threshold(tol: float) -> float:
    return max(10.0 * tol, LABEL_FLOOR)


def iterate_to_limit(F: SShaped, mu0: AtomicMeasure, max_iter: int = 500, tol: float = 1e-9,
                     eps_merge: float = EPS_MERGE, max_atoms: int = MAX_ATOMS) -> OrbitResult:
    """Iterate ``L~*`` until successive iterates are within ``tol`` in Wasserstein.

    Coalescing moves atoms by up to the merge eps actually used (which grows
    past ``eps_merge`` once the atom cap is reached), so a step shorter than
    that eps also counts as converged: it is below the discretisation noise.

    The limit is labelled by proximity: ``MuPlus``/``MuMinus`` when it is within
    ``label_threshold(tol)`` of the discretised ``mu_{+-r*}``, ``Delta0`` when
    its support radius is.  The orbit's order relation to ``delta_0`` is kept
    in the trace; once the orbit is strictly above (below) ``delta_0`` the
    bistable dynamics predict ``MuPlus`` (``MuMinus``), which is reported as
    ``predicted``.
    """
    delta0 = AtomicMeasure.delta(0.0)
    bistable = F.B > 6.0
    mu = mu0
    track = SupportTrack()
    trace: list[TraceRow] = []
    predicted = Limit.UNRESOLVED
    converged = False
    for n in range(1, max_iter + 1):
        nxt, r, eps_used = _step(F, mu, 0.0, eps_merge, max_atoms)
        track = support_step(track, r)
        step = wasserstein(mu, nxt)
        rel = order_compare(nxt, delta0)
        if bistable and predicted is Limit.UNRESOLVED:
            if rel is Order.GREATER:
                predicted = Limit.MU_PLUS
            elif rel is Order.LESS:
                predicted = Limit.MU_MINUS
        trace.append(TraceRow(n, r, field_of_measure(nxt), track.a, track.b, step, rel.value))
        mu = nxt
        if step < max(tol, eps_used):
            converged = True
            break
    if not bistable and predicted is Limit.UNRESOLVED:
        predicted = Limit.DELTA0
    label, dist = _label(F, mu, label_threshold(tol))
    return OrbitResult(mu, label, trace, converged, predicted, dist)


def _label(F, mu, thresh):
    radius = mu.radius()
    if radius < thresh:
        return Limit.DELTA0, radius
    if F.B > 6.0:
        r_star = classify_regime(F).r_star
        ref = mu_r_measure(r_star, LABEL_ATOMS)
        d_plus = wasserstein(mu, ref)
        d_minus = wasserstein(mu, ref.mirror())
        if d_plus < thresh:
            return Limit.MU_PLUS, d_plus
        if d_minus < thresh:
            return Limit.MU_MINUS, d_minus
        return Limit.UNRESOLVED, min(d_plus, d_minus, radius)
    return Limit.UNRESOLVED, radius
