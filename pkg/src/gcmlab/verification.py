"""Acceptance checks, shared by ``gcmlab verify`` and the test suite.

Each check returns a :class:`CheckResult` holding the measured quantity, the
threshold it is held to and the verdict.  Report lines have the form
``name, measured, threshold, pass|fail``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from . import ifs, ulam
from .coupling import Feedback, classify_regime, g_eval, h_eval, h_prime
from .ensemble import (Ensemble, NoiseSpec, expansion_bound, empirical_wasserstein, make_rng, occupation_asymmetry,
                       run_ensemble, sample_invariant, sign_switches)
from .moebius import apply, dual
from .site_maps import (M_r, Y_HI, Y_LO, invariant_density_u, sigma, sigma_prime, tau, tau_prime, w_density)

KAPPA1_BOUND, KAPPA2_BOUND = 0.5761, 0.5334
RHO_BOUND = 0.99396


@dataclass
class CheckResult:
    name: str
    measured: str
    threshold: str
    passed: bool
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{self.name}, {self.measured}, {self.threshold}, {'pass' if self.passed else 'fail'}"


@dataclass(frozen=True)
class Check:
    number: int
    name: str
    run: Callable[[int], CheckResult]
    slow: bool = False


def _g(v: float) -> str:
    return f"{v:.6g}"


# 1 -------------------------------------------------------------------------

def bifurcation_slope(seed: int = 0) -> CheckResult:
    errs = {B: abs(h_prime(Feedback(0.4, B), 0.0) - B / 6.0) for B in (2, 4, 6, 8, 12, 18)}
    worst = max(errs.values())
    return CheckResult("bifurcation_slope", f"max|H'(0)-B/6|={_g(worst)}", "1e-05", worst < 1e-5, detail=errs)


# 2 -------------------------------------------------------------------------

def pitchfork_structure(seed: int = 0) -> CheckResult:
    Bs = np.arange(2.0, 10.0 + 1e-9, 0.5)
    rows = [(B, classify_regime(Feedback(0.4, B)).r_star) for B in Bs]
    stable_ok = all(r == 0.0 for B, r in rows if B <= 6)
    branch = [r for B, r in rows if B > 6]
    bistable_ok = all(r > 0 for r in branch) and all(b > a for a, b in zip(branch, branch[1:]))
    resid = max(abs(h_eval(Feedback(0.4, B), r) - r) for B, r in rows)
    ok = stable_ok and bistable_ok and resid < 1e-12
    return CheckResult("pitchfork_structure", f"max|H(r*)-r*|={_g(resid)};stable_zero={stable_ok};"
                       f"branch_increasing={bistable_ok}", "1e-12", ok, detail=dict(rows))


# 3 -------------------------------------------------------------------------

def lipschitz_constants(seed: int = 0) -> CheckResult:
    k1, k2 = ifs.estimate_kappas(2000)
    j1, j2 = ifs.estimate_kappas(2000, joint=True)
    ok = k1 <= KAPPA1_BOUND and k2 <= KAPPA2_BOUND
    return CheckResult("lipschitz_constants", f"kappa1={_g(k1)};kappa2={_g(k2)}",
                       f"kappa1<={KAPPA1_BOUND};kappa2<={KAPPA2_BOUND}", ok,
                       detail={"joint_sup": (j1, j2)})


# 4 -------------------------------------------------------------------------

def expansion_bound_max(seed: int = 0) -> CheckResult:
    r = np.linspace(-0.5, 0.5, 1001)[:, None]
    g = np.linspace(0.0, 1.0, 1001)[None, :] * (25.0 - 50.0 * np.abs(r))
    rho = expansion_bound(r, g)
    worst = float(rho.max())
    return CheckResult("expansion_bound", f"max_rho={worst:.8f}", str(RHO_BOUND), worst <= RHO_BOUND)


# 5 -------------------------------------------------------------------------

def hyperbolic_eigenvalue(seed: int = 0) -> CheckResult:
    exact = 0.5 + 8.0 / 12.0
    e1 = abs(ulam.linearization_eigenvalue(8.0, 1024) - exact)
    e2 = abs(ulam.linearization_eigenvalue(8.0, 2048) - exact)
    ratio = e1 / e2 if e2 > 0 else float("inf")
    ok = e1 / exact < 0.01 and ratio >= 1.5
    return CheckResult("hyperbolic_eigenvalue", f"rel_err_1024={_g(e1 / exact)};shrink={_g(ratio)}",
                       "rel_err<0.01;shrink>=1.5", ok)


# 6 -------------------------------------------------------------------------

def stable_attraction(seed: int = 0) -> CheckResult:
    F = Feedback(0.4, 4.0)
    rng = np.random.default_rng(seed)
    starts = {
        "delta(2/3)": ifs.AtomicMeasure.delta(2.0 / 3.0),
        "delta(-2/3)": ifs.AtomicMeasure.delta(-2.0 / 3.0),
        "delta(0.5)": ifs.AtomicMeasure.delta(0.5),
        "random10": ifs.AtomicMeasure.from_atoms(rng.uniform(Y_LO, Y_HI, 10), rng.uniform(0.1, 1.0, 10)),
    }
    worst, ok, detail = 0.0, True, {}
    for name, mu in starts.items():
        res = ifs.iterate_to_limit(F, mu, max_iter=500, tol=1e-9)
        phi = abs(ifs.field_of_measure(res.limit))
        worst = max(worst, phi)
        ok &= res.label is ifs.Limit.DELTA0 and phi < 1e-8
        detail[name] = (res.label.value, phi, len(res.trace))
    return CheckResult("stable_attraction", f"max|field|={_g(worst)};labels_delta0={ok}", "1e-08", ok, detail=detail)


# 7 -------------------------------------------------------------------------

def bistable_attraction(seed: int = 0) -> CheckResult:
    F = Feedback(0.4, 8.0)
    r_star = classify_regime(F).r_star
    plus = ifs.iterate_to_limit(F, ifs.AtomicMeasure.delta(2.0 / 3.0))
    minus = ifs.iterate_to_limit(F, ifs.AtomicMeasure.delta(-2.0 / 3.0))
    phi_p, phi_m = ifs.field_of_measure(plus.limit), ifs.field_of_measure(minus.limit)
    self_cons = abs(g_eval(F, phi_p) - r_star)
    dist = ifs.wasserstein(plus.limit, ifs.mu_r_measure(r_star, 10_000))
    mirror = abs(phi_p + phi_m)
    ok = (plus.label is ifs.Limit.MU_PLUS and minus.label is ifs.Limit.MU_MINUS and self_cons < 1e-6
          and dist < 1e-4 and mirror <= 1e-12)
    return CheckResult("bistable_attraction",
                       f"|G(field)-r*|={_g(self_cons)};W_to_mu_r*={_g(dist)};mirror_gap={_g(mirror)}",
                       "1e-06;1e-04", ok, detail={"labels": (plus.label.value, minus.label.value)})


# 8 -------------------------------------------------------------------------

def symmetric_manifold(seed: int = 0) -> CheckResult:
    F = Feedback(0.4, 8.0)
    worst, ok, detail = 0.0, True, {}
    for y in (0.2, 0.5, 0.66):
        sym = ifs.iterate_to_limit(F, ifs.AtomicMeasure.symmetric_pair(y))
        phi = max(abs(row.field) for row in sym.trace)
        worst = max(worst, phi)
        tilt = ifs.iterate_to_limit(F, ifs.AtomicMeasure.symmetric_pair(y, 0.5 + 1e-3))
        ok &= sym.label is ifs.Limit.DELTA0 and phi < 1e-12 and tilt.label is ifs.Limit.MU_PLUS
        detail[y] = (sym.label.value, phi, tilt.label.value)
    return CheckResult("symmetric_manifold", f"max_orbit|field|={_g(worst)};flip_to_mu_plus={ok}", "1e-12",
                       ok, detail=detail)


# 9 -------------------------------------------------------------------------

def dual_representation(seed: int = 0, n_bins: int = 1024, steps: int = 10) -> CheckResult:
    F = Feedback(0.4, 8.0)
    mu = ifs.AtomicMeasure.delta(0.5)
    u = ulam.GridDensity.from_function(lambda x: w_density(0.5, x), n_bins)
    tol = max(5e-3, 5.0 / n_bins)
    gaps = []
    for _ in range(steps):
        mu = ifs.apply_self_consistent(F, mu)
        u, _ = ulam.apply_self_consistent_pfo(F, u)
        exact = ulam.GridDensity(ifs.cell_averages_from_measure(mu, n_bins), validate=False)
        gaps.append(ulam.l1_distance(u, exact))
    worst = max(gaps)
    return CheckResult("dual_representation", f"max_step_L1={_g(worst)}", _g(tol), worst < tol,
                       detail={"per_step": gaps})


# 10 ------------------------------------------------------------------------

def propagation_of_chaos(seed: int = 0, N: int = 50_000, steps: int = 5) -> CheckResult:
    F = Feedback(0.4, 8.0)
    mu = ifs.AtomicMeasure.delta(0.0)
    for _ in range(steps):
        mu = ifs.apply_self_consistent(F, mu)
    dists = []
    for s in (seed + 1, seed + 2, seed + 3):
        e = Ensemble(make_rng(s).random(N) - 0.5, F, rng_seed=s)
        final, _ = run_ensemble(e, steps)
        dists.append(empirical_wasserstein(final, mu))
    worst = max(dists)
    return CheckResult("propagation_of_chaos", f"max_W={_g(worst)}", "0.01", worst < 0.01, detail={"per_seed": dists})


# 11 ------------------------------------------------------------------------

def invariant_density(seed: int = 0, n_bins: int = 1024) -> CheckResult:
    rs = (0.1, -0.1, 0.3, -0.3, 0.4, -0.4)
    mass_err = max(abs(quad(lambda x: invariant_density_u(r, x), -0.5, 0.5, epsabs=1e-13, epsrel=1e-13, limit=200)[0] - 1.0)
                   for r in rs)
    resid = 0.0
    for r in rs:
        u = ulam.GridDensity.from_function(lambda x: invariant_density_u(r, x), n_bins)
        resid = max(resid, ulam.l1_distance(ulam.apply_pfo(ulam.build_ulam(r, n_bins), u), u))
    ok = mass_err < 1e-9 and resid < 5.0 / n_bins
    return CheckResult("invariant_density", f"mass_err={_g(mass_err)};ulam_resid*n={_g(resid * n_bins)}",
                       "1e-09;5", ok)


# 12 ------------------------------------------------------------------------

def random_measure(rng, k=None, lo=Y_LO, hi=Y_HI):
    k = int(rng.integers(1, 12)) if k is None else k
    return ifs.AtomicMeasure.from_atoms(rng.uniform(lo, hi, k), rng.uniform(0.05, 1.0, k))


def dominating_measure(mu: ifs.AtomicMeasure, rng) -> ifs.AtomicMeasure:
    """A measure strictly above ``mu`` in the stochastic order: atoms pushed right, at least the first."""
    moved = rng.random(mu.size) < 0.7
    moved[0] = True
    shift = rng.uniform(0.01, 0.3, mu.size) * moved
    return ifs.AtomicMeasure.from_atoms(np.minimum(mu.positions + shift, Y_HI), mu.weights)


def monotonicity_suite(seed: int = 0, n_pairs: int = 100, n_points: int = 10_000) -> CheckResult:
    rng = np.random.default_rng(seed)
    F = Feedback(0.4, 8.0)
    mono_fail = 0
    for _ in range(n_pairs):
        mu = random_measure(rng)
        nu = dominating_measure(mu, rng)
        a, b = ifs.apply_self_consistent(F, mu), ifs.apply_self_consistent(F, nu)
        if ifs.order_compare(a, b) not in (ifs.Order.LESS, ifs.Order.EQUAL):
            mono_fail += 1

    worst_excess = -np.inf
    for _ in range(n_pairs):
        mu, nu = random_measure(rng), random_measure(rng)
        r, s = rng.uniform(-0.4, 0.4, 2)
        lhs = ifs.wasserstein(ifs.apply_L(r, mu), ifs.apply_L(s, nu))
        rhs = KAPPA1_BOUND * ifs.wasserstein(mu, nu) + KAPPA2_BOUND * abs(r - s) + 1e-12
        worst_excess = max(worst_excess, lhs - rhs)

    r = rng.uniform(-0.4, 0.4, n_points)
    y = rng.uniform(Y_LO, Y_HI, n_points)
    s, t = np.asarray(sigma(r, y)), np.asarray(tau(r, y))
    away = np.abs(y + r) > 1e-6
    ident = {
        "reciprocal": float(np.max(np.abs(1.0 / s[away] - 1.0 / t[away] - 1.0))),
        "dual_matrix": float(max(abs(apply(dual(M_r(ri)), yi) - si) for ri, yi, si in zip(r[:200], y[:200], s[:200]))),
        "tau_from_sigma": float(np.max(np.abs(t - s / (1.0 - s)))),
        "zero": float(max(np.max(np.abs(sigma(r, -r))), np.max(np.abs(tau(r, -r))))),
        "tangency": float(np.max(np.abs(np.asarray(sigma_prime(r, -r)) - tau_prime(r, -r)))
                          + np.max(np.abs(np.asarray(sigma_prime(r, -r)) - 2.0 / (4.0 - r * r)))),
        "sigma_below_tau": float(np.min((t - s)[away])),
        "invariance": float(max(np.max(np.abs(s)), np.max(np.abs(t))) - Y_HI),
        "contraction": float(max(np.max(sigma_prime(r, Y_LO)), np.max(tau_prime(r, Y_HI))) - 0.75),
    }
    ident_ok = (ident["reciprocal"] < 1e-9 and ident["dual_matrix"] < 1e-12 and ident["tau_from_sigma"] < 1e-12
                and ident["zero"] == 0.0 and ident["tangency"] < 1e-14 and ident["sigma_below_tau"] > 0
                and ident["invariance"] <= 1e-15 and ident["contraction"] <= 0.0)
    ok = mono_fail == 0 and worst_excess <= 0 and ident_ok
    return CheckResult("monotonicity_suite",
                       f"order_failures={mono_fail};max_lipschitz_excess={_g(worst_excess)};identities_ok={ident_ok}",
                       "0;<=0", ok, detail=ident)


# 13 ------------------------------------------------------------------------

def noisy_switching(seed: int = 0, N: int = 100, short: int = 10**6, long: int = 10**7) -> CheckResult:
    F = Feedback(0.4, 8.0)
    ns = NoiseSpec(0.05)
    r_star = classify_regime(F).r_star
    start = sample_invariant(r_star, N, make_rng(seed))
    _, s = run_ensemble(Ensemble(start, F, rng_seed=seed + 1), short, ns)
    switches = sign_switches(s)
    _, s = run_ensemble(Ensemble(start, F, rng_seed=seed + 2), long, ns)
    asym = occupation_asymmetry(s)
    ok = switches >= 1 and asym < 0.1
    return CheckResult("noisy_switching", f"switches={switches};occupation_asymmetry={_g(asym)}", ">=1;<0.1", ok)


# 14 ------------------------------------------------------------------------

def gateaux_derivative(seed: int = 0, n_bins: int = 1024) -> CheckResult:
    F = Feedback(0.4, 8.0)
    u = ulam.GridDensity.uniform(n_bins)
    g = ulam.bin_midpoints(n_bins)
    g = g - g.mean()
    coarse = ulam.gateaux_check(F, u, g, 1e-3)
    fine = ulam.gateaux_check(F, u, g, 1e-4)
    ok = fine < 1e-2 and fine < coarse
    return CheckResult("gateaux_derivative", f"resid_1e-4={_g(fine)};resid_1e-3={_g(coarse)}", "1e-02;decreasing", ok)


CHECKS: tuple[Check, ...] = (
    Check(1, "bifurcation_slope", bifurcation_slope),
    Check(2, "pitchfork_structure", pitchfork_structure),
    Check(3, "lipschitz_constants", lipschitz_constants),
    Check(4, "expansion_bound", expansion_bound_max),
    Check(5, "hyperbolic_eigenvalue", hyperbolic_eigenvalue),
    Check(6, "stable_attraction", stable_attraction),
    Check(7, "bistable_attraction", bistable_attraction),
    Check(8, "symmetric_manifold", symmetric_manifold),
    Check(9, "dual_representation", dual_representation),
    Check(10, "propagation_of_chaos", propagation_of_chaos),
    Check(11, "invariant_density", invariant_density),
    Check(12, "monotonicity_suite", monotonicity_suite),
    Check(13, "noisy_switching", noisy_switching, slow=True),
    Check(14, "gateaux_derivative", gateaux_derivative),
)


def select(names_or_numbers=(), skip_slow: bool = False) -> list[Check]:
    wanted = {str(x) for x in names_or_numbers}
    out = [c for c in CHECKS if not wanted or str(c.number) in wanted or c.name in wanted]
    if wanted and not out:
        raise ValueError(f"no check matches {sorted(wanted)}")
    return [c for c in out if not (skip_slow and c.slow)]


def run_check(check: Check, seed: int = 0) -> CheckResult:
    t0 = time.perf_counter()
    res = check.run(seed)
    res.seconds = time.perf_counter() - t0
    return res
