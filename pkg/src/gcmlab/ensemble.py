"""Finite mean-field coupled systems ``(T_N x)_i = T_{G(phi(x))}(x_i)``.

The time loop runs in a compiled kernel; :func:`step` calls the same kernel
for a single step, so a trajectory is bit-identical whether it is produced at
once or step by step.  Noise is drawn from a counter-based (Philox) stream
owned by the ensemble.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .coupling import Feedback, SShaped, g_eval, g_prime
from .ifs import AtomicMeasure, cell_averages_from_measure
from .site_maps import delta_r, gamma_r, map_T, map_T_prime
from .ulam import GridDensity

log = logging.getLogger(__name__)

NOISE_CHUNK = 1 << 16
MAX_NOISE = 0.1
REFERENCE_BINS = 4096
JACOBIAN_MAX_N = 64


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise on the field, uniform on ``[-epsilon, epsilon]``."""

    epsilon: float = 0.0
    distribution: str = "UniformSymmetric"

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= MAX_NOISE:
            raise ValueError(f"epsilon must lie in [0, {MAX_NOISE}], got {self.epsilon}")
        if self.distribution != "UniformSymmetric":
            raise ValueError(f"unsupported noise distribution {self.distribution!r}")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.epsilon * (2.0 * rng.random(size) - 1.0)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """N coordinates in X with their feedback and a private noise stream.

    ``rng`` is created from ``rng_seed`` and advanced by the noisy updates;
    ensembles produced from one another share it, as one run owns one stream.
    """

    states: np.ndarray
    F: SShaped = Feedback()
    rng_seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        x = np.array(self.states, dtype=float, ndmin=1)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("states must be a non-empty 1-d array")
        if np.any(np.abs(x) > 0.5):
            raise ValueError("states must lie in [-1/2, 1/2]")
        x.flags.writeable = False
        object.__setattr__(self, "states", x)
        if self.rng is None:
            object.__setattr__(self, "rng", make_rng(self.rng_seed))

    @property
    def N(self) -> int:
        return self.states.size

    def with_states(self, x) -> "Ensemble":
        return replace(self, states=x, rng=self.rng)


# ---------------------------------------------------------------------------
# kernels

@numba.njit(cache=True)
def _paired_mean(x):
    # x_i is paired with x_{N-1-i}, so index-symmetric configurations give 0
    n = x.size
    s = 0.0
    c = 0.0
    a, b = 0, n - 1
    while a <= b:
        v = x[a] + x[b] if a < b else x[a]
        v -= c
        t = s + v
        c = (t - s) - v
        s = t
        a += 1
        b -= 1
    return s / n


@numba.njit(cache=True)
def _site_map(r, x):
    f = ((r + 4.0) * x + (r + 1.0)) / (2.0 * r * x + 2.0)
    if x >= -r / 4.0:
        f -= 1.0
    if f < -0.5:
        f = -0.5
    elif f > 0.5:
        f = 0.5
    return f


@numba.njit(cache=True)
def _run(x, A, B, noise, series):
    """Advance ``x`` in place by ``noise.size`` steps; returns the clamp count."""
    clamped = 0
    scale = B / A if A > 0 else 0.0
    for k in range(noise.size):
        phi = _paired_mean(x) + noise[k]
        if phi > 0.5:
            phi = 0.5
            clamped += 1
        elif phi < -0.5:
            phi = -0.5
            clamped += 1
        r = A * np.tanh(scale * phi)
        for i in range(x.size):
            x[i] = _site_map(r, x[i])
        series[k] = _paired_mean(x)
    return clamped


def _python_run(x, F, noise, series):
    clamped = 0
    for k in range(noise.size):
        phi = float(_paired_mean(x)) + noise[k]
        if abs(phi) > 0.5:
            phi = float(np.clip(phi, -0.5, 0.5))
            clamped += 1
        x[:] = np.clip(map_T(float(g_eval(F, phi)), x), -0.5, 0.5)
        series[k] = _paired_mean(x)
    return clamped


def _advance(e: Ensemble, noise: np.ndarray):
    x = e.states.copy()
    series = np.empty(noise.size)
    if isinstance(e.F, Feedback):
        clamped = _run(x, e.F.A, e.F.B, noise, series)
    else:
        clamped = _python_run(x, e.F, noise, series)
    if clamped:
        log.info("field plus noise left X %d times; clamped into [-1/2, 1/2]", clamped)
    return x, series


# ---------------------------------------------------------------------------
# operations

def mean_field(e: Ensemble) -> float:
    return float(_paired_mean(np.ascontiguousarray(e.states)))


def step(e: Ensemble) -> Ensemble:
    """One deterministic step of the coupled system."""
    x, _ = _advance(e, np.zeros(1))
    return e.with_states(x)


def noisy_step(e: Ensemble, ns: NoiseSpec) -> Ensemble:
    """One step with parameter ``G(phi + eta)``, ``eta`` drawn from the ensemble's stream."""
    if ns.epsilon == 0.0:
        return step(e)
    x, _ = _advance(e, ns.draw(e.rng, 1))
    return e.with_states(x)


def run_ensemble(e: Ensemble, n_steps: int, ns: NoiseSpec | None = None) -> tuple[Ensemble, np.ndarray]:
    """Run ``n_steps`` steps; returns the final ensemble and the field after each step.

    Noise is generated in fixed-size chunks, so the draws (and the trajectory)
    depend only on the seed, not on how the run is split.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    noisy = ns is not None and ns.epsilon > 0.0
    out = np.empty(n_steps)
    cur = e
    done = 0
    while done < n_steps:
        k = min(NOISE_CHUNK, n_steps - done)
        noise = ns.draw(e.rng, k) if noisy else np.zeros(k)
        x, series = _advance(cur, noise)
        out[done:done + k] = series
        cur = cur.with_states(x)
        done += k
    return cur, out


def run_mean_field_series(e: Ensemble, n_steps: int, ns: NoiseSpec | None = None) -> np.ndarray:
    return run_ensemble(e, n_steps, ns)[1]


def expansion_bound(r, g):
    """Upper bound ``rho`` on the Euclidean norm of ``(D T_N)^-1``.

    ``rho = (1/2)(2+|r|)/(2-|r|) * sqrt(1 + 9/(16 sqrt(3) sqrt(Gamma)) + 1/(4 Gamma))``
    with ``Gamma = (4 - r^2)/g``; at ``g = 0`` the square root is 1.
    """
    r = np.abs(np.asarray(r, dtype=float))
    g = np.asarray(g, dtype=float)
    if np.any(r > 0.5) or np.any(g < 0):
        raise ValueError("need |r| <= 1/2 and g >= 0")
    inv_gamma = g / (4.0 - r * r)  # 1/Gamma, zero in the limit g = 0
    out = 0.5 * (2.0 + r) / (2.0 - r) * np.sqrt(1.0 + 9.0 / (16.0 * np.sqrt(3.0)) * np.sqrt(inv_gamma)
                                                 + inv_gamma / 4.0)
    return float(out) if out.ndim == 0 else out


def jacobian(F: SShaped, x) -> np.ndarray:
    """Full derivative of ``T_N`` at ``x`` (test oracle, small N only)."""
    x = np.asarray(x, dtype=float)
    phi = x.mean()
    r, g = float(g_eval(F, phi)), float(g_prime(F, phi))
    d1 = np.asarray(map_T_prime(r, x))
    d2 = (1.0 - 4.0 * x * x) / (2.0 * (r * x + 1.0) ** 2)
    return np.diag(d1) + np.outer(d2, np.full(x.size, g / x.size))


def jacobian_inverse(F: SShaped, x) -> np.ndarray:
    """Rank-one-update inverse of the derivative of ``T_N``, for ``N <= 64``.

    ``(D T_N)^-1 = (1 - g q e^T / (4 - r^2 + g e^T q)) diag(T_r'(x))^-1`` with
    ``q_i = 1 - 4 x_i^2``, ``e = (1/N, ..., 1/N)`` and ``g = G'(phi)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n > JACOBIAN_MAX_N:
        raise ValueError(f"jacobian_inverse is an oracle for N <= {JACOBIAN_MAX_N}")
    phi = x.mean()
    r, g = float(g_eval(F, phi)), float(g_prime(F, phi))
    q = 1.0 - 4.0 * x * x
    e = np.full(n, 1.0 / n)
    core = np.eye(n) - g / (4.0 - r * r + g * (e @ q)) * np.outer(q, e)
    return core / np.asarray(map_T_prime(r, x))[None, :]


# ---------------------------------------------------------------------------
# sampling and statistics

def sample_representing(mu: AtomicMeasure, N: int, rng: np.random.Generator) -> np.ndarray:
    """Draw N points from the density ``sum w_i w_{y_i}``."""
    y = mu.positions[rng.choice(mu.size, size=N, p=mu.weights)] if mu.size > 1 else np.full(N, mu.positions[0])
    return _w_quantile(y, rng.random(N))


def _w_quantile(y, q):
    # inverse of the distribution function (1 - y/2)(x + 1/2)/(1 - x y)
    a = 1.0 - y / 2.0
    return np.clip((q - a / 2.0) / (a + q * y), -0.5, 0.5)


def sample_invariant(r: float, N: int, rng: np.random.Generator) -> np.ndarray:
    """Draw N points from the invariant density ``u_r``.

    ``u_r`` is the mixture of ``w_y`` over ``y`` with density proportional to
    ``1/(1 - y^2/4)`` on ``[gamma_r, delta_r]``, sampled through ``atanh(y/2)``.
    """
    if r == 0.0:
        return rng.random(N) - 0.5
    lo, hi = np.arctanh(gamma_r(r) / 2.0), np.arctanh(delta_r(r) / 2.0)
    y = 2.0 * np.tanh(lo + (hi - lo) * rng.random(N))
    return _w_quantile(y, rng.random(N))


def empirical_wasserstein(e: Ensemble | np.ndarray, ref: AtomicMeasure | GridDensity,
                          ref_bins: int = REFERENCE_BINS) -> float:
    """``integral |F_emp - F_ref|`` between the coordinates and a reference density.

    A representing measure is first turned into exact cell averages on
    ``ref_bins`` bins.  The reference CDF is then piecewise linear and the
    integral is evaluated exactly on the union of bin edges and samples.
    """
    x = np.sort(np.asarray(e.states if isinstance(e, Ensemble) else e, dtype=float))
    if isinstance(ref, AtomicMeasure):
        dens = cell_averages_from_measure(ref, ref_bins)
    else:
        dens = np.asarray(ref.values)
    n_bins = dens.size
    edges = -0.5 + np.arange(n_bins + 1) / n_bins
    cdf_edges = np.concatenate([[0.0], np.cumsum(dens) / n_bins])
    cdf_edges /= cdf_edges[-1]
    pts = np.union1d(edges, x)
    f_ref = np.interp(pts, edges, cdf_edges)
    f_emp = np.searchsorted(x, pts, side="right") / x.size
    # on each gap F_emp is constant and F_ref linear
    d0 = f_emp[:-1] - f_ref[:-1]
    d1 = f_emp[:-1] - f_ref[1:]
    h = np.diff(pts)
    same = d0 * d1 >= 0
    area = np.where(same, 0.5 * np.abs(d0 + d1) * h,
                    0.5 * h * (d0 * d0 + d1 * d1) / np.maximum(np.abs(d0) + np.abs(d1), 1e-300))
    return float(area.sum())


def autocorrelation(series, lag: int) -> float:
    """Normalised autocovariance at ``lag``; NaN (with a warning) for constant series."""
    s = np.asarray(series, dtype=float)
    if not 0 <= lag < s.size:
        raise ValueError("lag must satisfy 0 <= lag < len(series)")
    c = s - s.mean()
    var = c @ c / s.size
    if var == 0.0:
        warnings.warn("autocorrelation of a constant series is undefined", RuntimeWarning, stacklevel=2)
        return float("nan")
    return float(c[: s.size - lag] @ c[lag:] / s.size / var)


def sign_switches(series) -> int:
    """Number of sign changes of a series, ignoring exact zeros."""
    s = np.sign(np.asarray(series, dtype=float))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def occupation_asymmetry(series) -> float:
    """``|#positive - #negative| / (#positive + #negative)``."""
    s = np.asarray(series, dtype=float)
    pos, neg = np.count_nonzero(s > 0), np.count_nonzero(s < 0)
    return abs(pos - neg) / max(pos + neg, 1)
