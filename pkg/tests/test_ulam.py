import numpy as np
import pytest
from hypothesis import given, strategies as st

from gcmlab import ifs, ulam
from gcmlab.coupling import Feedback, classify_regime
from gcmlab.errors import ShapeMismatch
from gcmlab.site_maps import invariant_density_u, p_weight, sigma, tau, w_density
from gcmlab.ulam import GridDensity

F8 = Feedback(0.4, 8.0)
F4 = Feedback(0.4, 4.0)


def grid(f, n):
    return GridDensity.from_function(f, n)


def preimage_matrix_oracle(r, n, samples=2000):
    # Monte-Carlo-free oracle: fraction of evenly spaced points in each bin landing in each target bin
    from gcmlab.site_maps import map_T
    P = np.zeros((n, n))
    e = ulam.bin_edges(n)
    for i in range(n):
        x = e[i] + (np.arange(samples) + 0.5) / samples / n
        j = np.clip(np.floor((np.asarray(map_T(r, x)) + 0.5) * n).astype(int), 0, n - 1)
        P[i] = np.bincount(j, minlength=n) / samples
    return P


def test_r0_structure():
    n = 16
    P = ulam.build_ulam(0.0, n).matrix.toarray()
    # T_0 is 2x + 1/2 mod 1: bin i covers two target bins with weight 1/2 each
    for i in range(n):
        nz = np.flatnonzero(P[i])
        assert nz.size == 2 and np.allclose(P[i, nz], 0.5, atol=1e-15)
        assert list(nz) == [(2 * i) % n, (2 * i + 1) % n]


@pytest.mark.parametrize("r", [-0.37, 0.0, 0.13, 0.3])
def test_matrix_against_point_count(r):
    P = ulam.build_ulam(r, 24).matrix.toarray()
    np.testing.assert_allclose(P, preimage_matrix_oracle(r, 24), atol=2e-3)


@given(st.floats(-0.4, 0.4), st.sampled_from([2, 3, 17, 64, 512]))
def test_row_stochastic(r, n):
    P = ulam.build_ulam(r, n).matrix
    np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-13)
    assert P.min() >= 0


def test_build_rejects_bad_input():
    with pytest.raises(ValueError):
        ulam.build_ulam(0.5, 10)
    with pytest.raises(ValueError):
        ulam.build_ulam(0.1, 1)


@pytest.mark.parametrize("r", [0.3, -0.3, 0.1])
def test_invariant_density_residual(r):
    n = 1024
    u = grid(lambda x: invariant_density_u(r, x), n)
    assert ulam.l1_distance(ulam.apply_pfo(ulam.build_ulam(r, n), u), u) < 5 / n


def test_apply_pfo_basics():
    n = 128
    one = GridDensity.uniform(n)
    np.testing.assert_allclose(ulam.apply_pfo(ulam.build_ulam(0.0, n), one).values, 1.0, atol=1e-14)
    rng = np.random.default_rng(0)
    v = rng.random(n)
    u = GridDensity(v / v.mean())
    out = ulam.apply_pfo(ulam.build_ulam(0.3, n), u)
    assert abs(out.values.mean() - 1) < 1e-10 and out.values.min() >= 0
    with pytest.raises(ShapeMismatch):
        ulam.apply_pfo(ulam.build_ulam(0.3, 64), u)


def test_iteration_converges_to_invariant_density():
    n = 1024
    M = ulam.build_ulam(0.3, n)
    u = GridDensity.uniform(n)
    for _ in range(60):
        u = ulam.apply_pfo(M, u)
    assert ulam.l1_distance(u, grid(lambda x: invariant_density_u(0.3, x), n)) < 5 / n


def test_grid_density_validation():
    with pytest.raises(ValueError):
        GridDensity([1.0, 0.5])
    with pytest.raises(ValueError):
        GridDensity([2.5, -0.5])
    u = GridDensity.uniform(8)
    assert u.field() == pytest.approx(0.0, abs=1e-17)


def test_field_midpoint_rule():
    n = 512
    u = grid(lambda x: invariant_density_u(0.3, x), n)
    from gcmlab.site_maps import psi
    assert u.field() == pytest.approx(float(psi(0.3)), abs=1e-5)


def test_duality_consistency():
    n = 1024
    for r, y in ((0.3, 0.5), (-0.2, -0.6), (0.1, 0.0)):
        u = grid(lambda x: w_density(y, x), n)
        lhs = ulam.apply_pfo(ulam.build_ulam(r, n), u)
        p = p_weight(r, y)
        rhs = p * ulam.cell_averages(lambda x: w_density(sigma(r, y), x), n) \
            + (1 - p) * ulam.cell_averages(lambda x: w_density(tau(r, y), x), n)
        assert np.abs(lhs.values - rhs).mean() < 5 / n


def test_self_consistent_symmetric_input():
    n = 256
    u = grid(lambda x: 1 + 0.3 * np.cos(2 * np.pi * x), n)
    out, r = ulam.apply_self_consistent_pfo(F8, u)
    assert r == 0.0
    np.testing.assert_allclose(out.values, out.values[::-1], atol=1e-13)


def test_self_consistent_fixed_point():
    n = 1024
    r_star = classify_regime(F8).r_star
    u = grid(lambda x: invariant_density_u(r_star, x), n)
    out, r = ulam.apply_self_consistent_pfo(F8, u)
    assert abs(r - r_star) < 1e-4
    assert ulam.l1_distance(out, u) < 5 / n


def test_cache_quantises_and_is_shared():
    cache = ulam.UlamCache(max_entries=2)
    a = cache.get(0.1234564, 32)
    b = cache.get(0.1234561, 32)
    assert a is b and a.r == pytest.approx(0.123456)
    cache.get(0.2, 32)
    cache.get(0.3, 32)
    assert len(cache._store) == 2


def test_cross_validation_with_ifs():
    n = 1024
    mu = ifs.AtomicMeasure.delta(0.5)
    u = grid(lambda x: w_density(0.5, x), n)
    for _ in range(10):
        mu = ifs.apply_self_consistent(F8, mu)
        u, _ = ulam.apply_self_consistent_pfo(F8, u)
        assert np.abs(u.values - ifs.cell_averages_from_measure(mu, n)).mean() < max(5 / n, 1e-3)


@pytest.mark.parametrize("F,target", [(F4, 0.0), (F8, None)])
def test_grid_regime_consistency(F, target):
    n = 256
    u = grid(lambda x: 1 + 0.4 * x + 0.1 * np.sin(3 * x), n)
    cache = ulam.UlamCache()
    prev = u
    for _ in range(300):
        u, r = ulam.apply_self_consistent_pfo(F, u, cache)
        if ulam.l1_distance(u, prev) < 1e-12:
            break
        prev = u
    r_lim = 0.0 if target == 0.0 else classify_regime(F).r_star
    ref = GridDensity.uniform(n) if r_lim == 0.0 else grid(lambda x: invariant_density_u(r_lim, x), n)
    assert ulam.l1_distance(u, ref) < 5 / n


def test_l1_examples():
    n = 100
    one = GridDensity.uniform(n)
    assert ulam.l1_distance(one, one) == 0.0
    bump = np.ones(n)
    bump[:25] += 0.1
    bump[25:50] -= 0.1
    assert ulam.l1_distance(one, GridDensity(bump)) == pytest.approx(0.05, abs=1e-15)
    assert ulam.l1_distance(grid(lambda x: invariant_density_u(0.3, x), n), one) > 0.01
    with pytest.raises(ShapeMismatch):
        ulam.l1_distance(one, GridDensity.uniform(10))


def test_eigenvalue_and_eigenvector():
    lam, vec = ulam.linearization_eigenvalue(8.0, 1024, return_vector=True)
    assert lam == pytest.approx(7 / 6, rel=1e-2)
    x = ulam.bin_midpoints(1024)
    cos = abs(vec @ x) / (np.linalg.norm(vec) * np.linalg.norm(x))
    assert cos > 0.999


def test_eigenvalue_neutral_at_bifurcation():
    assert ulam.linearization_eigenvalue(6.0, 1024) == pytest.approx(1.0, rel=1e-2)


def test_eigenvalue_rejects_bad_input():
    with pytest.raises(ValueError):
        ulam.linearization_eigenvalue(0.0, 1024)
    with pytest.raises(ValueError):
        ulam.linearization_eigenvalue(8.0, 32)


def _variation(f):
    return np.abs(np.diff(f)).sum()


def test_variation_halved_on_stable_directions():
    # discretised surrogate of the BV contraction: on grid functions with
    # zero mean and zero field, Q acts as P_0, which halves the variation
    n = 512
    P0 = ulam.build_ulam(0.0, n)
    x = ulam.bin_midpoints(n)
    rng = np.random.default_rng(1)
    for _ in range(20):
        f = np.cumsum(rng.standard_normal(n))
        f -= f.mean()
        f -= (f @ x) / (x @ x) * x
        f -= f.mean()
        Qf = P0.push(f) + 8.0 * x * (x @ f / n)
        assert _variation(Qf) <= 0.5 * _variation(f) + 1e-9


def test_gateaux_zero_perturbation():
    u = GridDensity.uniform(256)
    assert ulam.gateaux_check(F8, u, np.zeros(256)) == 0.0
    with pytest.raises(ShapeMismatch):
        ulam.gateaux_check(F8, u, np.zeros(10))


def test_gateaux_at_uniform_density():
    n = 1024
    g = ulam.bin_midpoints(n)
    g -= g.mean()
    assert ulam.gateaux_check(F8, GridDensity.uniform(n), g, 1e-4) < max(10 / n, 1e-3)


def _exact_transfer(r, f, x):
    from gcmlab.moebius import apply
    from gcmlab.site_maps import M_r, N_r, map_T_prime
    out = 0.0
    for M in (M_r(r), N_r(r)):
        y = np.asarray(apply(M.inverse(), x))
        out = out + f(y) / np.asarray(map_T_prime(r, y))
    return out


def test_predicted_derivative_matches_continuum():
    # the prediction P_r((u v_r)') on the grid converges to the exact parameter
    # derivative of P_r u for smooth u
    r, d = 0.1, 1e-6
    u = lambda x: invariant_density_u(0.2, x)
    v = lambda y: (4 * y * y - 1) / (4 - r * r)
    uvp = lambda y: (u(y + d) * v(y + d) - u(y - d) * v(y - d)) / (2 * d)
    errs = []
    for n in (512, 2048):
        exact = ulam.cell_averages(lambda x: _exact_transfer(r, uvp, x), n)
        ug = grid(u, n).values
        x = ulam.bin_midpoints(n)
        pred = ulam.build_ulam(r, n).push(ulam._grid_derivative(ug * (4 * x * x - 1) / (4 - r * r)))
        errs.append(np.abs(pred - exact).mean())
    assert errs[1] < errs[0] / 3 and errs[1] < 1e-4


@pytest.mark.xfail(strict=True, reason="the exact Ulam operator on step densities is differentiable in r only "
                   "weakly: for non-constant u its difference quotient keeps an O(1) L1 gap to the smooth "
                   "prediction, so the residual plateaus independently of tau")
def test_gateaux_consistency_at_smooth_density():
    n = 1024
    u = grid(lambda x: invariant_density_u(0.2, x), n)
    rng = np.random.default_rng(2)
    x = ulam.bin_midpoints(n)
    c = rng.standard_normal(4)
    g = sum(ck * np.cos((k + 1) * np.pi * x + k) for k, ck in enumerate(c))
    g -= g.mean()
    assert ulam.gateaux_check(F8, u, g, 1e-4) < ulam.gateaux_check(F8, u, g, 1e-3)
