import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gcmlab import ensemble as en
from gcmlab import ifs
from gcmlab.coupling import Feedback, classify_regime
from gcmlab.ensemble import Ensemble, NoiseSpec
from gcmlab.site_maps import map_T, psi
from gcmlab.ulam import GridDensity

F8 = Feedback(0.4, 8.0)
F4 = Feedback(0.4, 4.0)

states = st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=40)


def reference_step(F, x):
    # independent evaluation: plain mean, closed-form feedback, site map
    x = np.asarray(x, dtype=float)
    r = F.A * np.tanh(F.B / F.A * x.mean())
    return np.asarray(map_T(r, x))


def test_mean_field_examples():
    assert en.mean_field(Ensemble(np.zeros(7))) == 0.0
    assert en.mean_field(Ensemble([-0.5, 0.5])) == 0.0
    assert en.mean_field(Ensemble([0.1, 0.2, 0.3])) == pytest.approx(0.2, abs=1e-16)


def test_ensemble_validation():
    with pytest.raises(ValueError):
        Ensemble([0.7])
    with pytest.raises(ValueError):
        Ensemble([])
    with pytest.raises(ValueError):
        NoiseSpec(0.2)


@given(states)
def test_step_matches_reference(x):
    out = en.step(Ensemble(x, F8))
    np.testing.assert_allclose(out.states, reference_step(F8, x), atol=1e-9)
    assert np.all(np.abs(out.states) <= 0.5)


def test_symmetric_configuration():
    rng = np.random.default_rng(0)
    h = rng.uniform(-0.5, 0.5, 20)
    x = np.concatenate([h, -h[::-1]])
    e = Ensemble(x, F8)
    assert en.mean_field(e) == 0.0
    out = en.step(e).states
    np.testing.assert_array_equal(out, -out[::-1])


def test_single_site_boundary_fixed():
    out = en.step(Ensemble([-0.5], F8))
    assert out.states[0] == -0.5


def test_empirical_measure_conjugacy():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.uniform(-0.5, 0.5, 5)
        lhs = ifs_like_atoms(en.step(Ensemble(x, F8)).states)
        # push the empirical measure forward by T_r with r from its own mean
        r = F8.A * np.tanh(F8.B / F8.A * np.mean(x))
        rhs = ifs_like_atoms(np.asarray(map_T(r, x)))
        np.testing.assert_allclose(lhs[0], rhs[0], atol=1e-9)
        np.testing.assert_allclose(lhs[1], rhs[1])


def ifs_like_atoms(x):
    pos, counts = np.unique(np.round(x, 12), return_counts=True)
    return pos, counts / x.size


@given(states, st.randoms(use_true_random=False))
def test_permutation_equivariance(x, rnd):
    perm = list(range(len(x)))
    rnd.shuffle(perm)
    a = en.step(Ensemble(x, F8)).states
    b = en.step(Ensemble(np.asarray(x)[perm], F8)).states
    np.testing.assert_allclose(b, a[perm], atol=1e-9)


def test_noise_moments():
    ns = NoiseSpec(0.05)
    eta = ns.draw(en.make_rng(3), 10**6)
    assert abs(eta.mean()) < 3 * 0.05 / np.sqrt(12e6)
    assert np.max(np.abs(eta)) <= 0.05
    assert eta.var() == pytest.approx(0.05**2 / 3, rel=1e-2)


def test_noise_free_matches_step():
    e = Ensemble(np.random.default_rng(4).uniform(-0.5, 0.5, 50), F8)
    np.testing.assert_array_equal(en.noisy_step(e, NoiseSpec(0.0)).states, en.step(e).states)
    _, s = en.run_ensemble(e, 5)
    cur = e
    for k in range(5):
        cur = en.step(cur)
        assert s[k] == en.mean_field(cur)


def test_seed_determinism():
    x = np.random.default_rng(5).uniform(-0.5, 0.5, 100)
    ns = NoiseSpec(0.05)
    a = en.run_mean_field_series(Ensemble(x, F8, rng_seed=9), 1000, ns)
    b = en.run_mean_field_series(Ensemble(x, F8, rng_seed=9), 1000, ns)
    c = en.run_mean_field_series(Ensemble(x, F8, rng_seed=10), 1000, ns)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_noisy_step_uses_stream_in_order():
    x = np.random.default_rng(6).uniform(-0.5, 0.5, 30)
    ns = NoiseSpec(0.05)
    e = Ensemble(x, F8, rng_seed=2)
    for _ in range(4):
        e = en.noisy_step(e, ns)
    _, s = en.run_ensemble(Ensemble(x, F8, rng_seed=2), 4, ns)
    assert en.mean_field(e) == s[-1]


def test_run_rejects_zero_steps():
    with pytest.raises(ValueError):
        en.run_ensemble(Ensemble([0.1]), 0)


def test_custom_feedback_fallback():
    class Linear:
        A, B = 0.4, 2.0

        def value(self, x):
            return 2.0 * np.asarray(x) * 0.1

        def prime(self, x):
            return 0.2 + 0.0 * np.asarray(x)

    x = np.linspace(-0.4, 0.4, 9) + 0.01
    out = en.step(Ensemble(x, Linear()))
    np.testing.assert_allclose(out.states, map_T(0.2 * x.mean(), x), atol=1e-12)


# --- expansion ---------------------------------------------------------------

def test_expansion_bound_examples():
    assert en.expansion_bound(0.0, 0.0) == 0.5
    r = np.linspace(-0.5, 0.5, 1001)[:, None]
    g = np.linspace(0, 1, 1001)[None, :] * (25 - 50 * np.abs(r))
    assert en.expansion_bound(r, g).max() <= 0.99396
    gs = np.linspace(0, 15, 200)
    assert np.all(np.diff(en.expansion_bound(0.2, gs)) > 0)
    with pytest.raises(ValueError):
        en.expansion_bound(0.6, 1.0)


def test_jacobian_against_finite_differences():
    x = np.random.default_rng(7).uniform(-0.45, 0.45, 6)
    J = en.jacobian(F8, x)
    h = 1e-7
    num = np.empty((6, 6))
    for j in range(6):
        d = np.zeros(6)
        d[j] = h
        num[:, j] = (reference_step(F8, x + d) - reference_step(F8, x - d)) / (2 * h)
    np.testing.assert_allclose(J, num, atol=1e-5)


@pytest.mark.parametrize("N", [1, 5, 32, 64])
def test_jacobian_inverse_and_bound(N):
    rng = np.random.default_rng(N)
    F = Feedback(0.4, 12.0)
    x = rng.uniform(-0.5, 0.5, N) * 0.2
    Jinv = en.jacobian_inverse(F, x)
    np.testing.assert_allclose(Jinv, np.linalg.inv(en.jacobian(F, x)), rtol=1e-10, atol=1e-12)
    r, g = float(F.value(x.mean())), float(F.prime(x.mean()))
    assert np.linalg.norm(Jinv, 2) <= en.expansion_bound(r, g) + 1e-12


def test_jacobian_inverse_size_limit():
    with pytest.raises(ValueError):
        en.jacobian_inverse(F8, np.zeros(65))


# --- long runs ---------------------------------------------------------------

def test_stable_run_at_clt_scale():
    N = 10_000
    e = Ensemble(en.make_rng(0).random(N) - 0.5, F4)
    s = en.run_mean_field_series(e, 100)
    assert abs(s[-1]) < 5 / np.sqrt(N)


def test_bistable_run_near_fixed_point():
    N = 10_000
    r_star = classify_regime(F8).r_star
    e = Ensemble(en.sample_invariant(r_star, N, en.make_rng(1)), F8)
    s = en.run_mean_field_series(e, 100)
    assert np.all(np.abs(s - psi(r_star)) < 5 / np.sqrt(N))


def test_noisy_bistable_switches():
    r_star = classify_regime(F8).r_star
    e = Ensemble(en.sample_invariant(r_star, 100, en.make_rng(2)), F8, rng_seed=3)
    s = en.run_mean_field_series(e, 10**6, NoiseSpec(0.05))
    assert en.sign_switches(s) >= 1


# --- sampling and distances --------------------------------------------------

def test_sample_invariant_distribution():
    x = en.sample_invariant(0.3, 200_000, en.make_rng(4))
    from gcmlab.site_maps import invariant_density_u
    ref = GridDensity.from_function(lambda t: invariant_density_u(0.3, t), 1024)
    assert en.empirical_wasserstein(x, ref) < 5e-3
    assert x.mean() == pytest.approx(float(psi(0.3)), abs=3e-3)


def test_sample_representing_matches_density():
    mu = ifs.AtomicMeasure([-0.5, 0.4], [0.3, 0.7])
    x = en.sample_representing(mu, 200_000, en.make_rng(5))
    assert en.empirical_wasserstein(x, mu) < 5e-3


def test_quantile_coordinates_have_small_distance():
    N = 1000
    x = -0.5 + (np.arange(N) + 0.5) / N
    assert en.empirical_wasserstein(x, GridDensity.uniform(1024)) < 1.0 / N


def test_empirical_wasserstein_exact_small_case():
    # one point at 0 against the uniform density: integral of |F| = 1/4
    assert en.empirical_wasserstein(np.array([0.0]), GridDensity.uniform(4)) == pytest.approx(0.25, abs=1e-15)
    assert en.empirical_wasserstein(np.array([-0.5]), GridDensity.uniform(8)) == pytest.approx(0.5, abs=1e-15)


def test_iid_uniform_distance():
    x = en.make_rng(6).random(50_000) - 0.5
    assert en.empirical_wasserstein(x, GridDensity.uniform(1024)) < 0.01


def test_propagation_of_chaos_short():
    N = 50_000
    e = Ensemble(en.make_rng(7).random(N) - 0.5, F8)
    mu = ifs.AtomicMeasure.delta(0.0)
    for _ in range(5):
        e = en.step(e)
        mu = ifs.apply_self_consistent(F8, mu)
    assert en.empirical_wasserstein(e, mu) < 0.01


# --- correlations ------------------------------------------------------------

def test_autocorrelation_constant_series():
    with pytest.warns(RuntimeWarning):
        assert np.isnan(en.autocorrelation(np.ones(100), 1))


def test_autocorrelation_white_noise():
    s = en.make_rng(8).standard_normal(10**5)
    assert abs(en.autocorrelation(s, 1)) < 0.02
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert en.autocorrelation(s, 0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        en.autocorrelation(s, 10**5)


def test_autocorrelation_decay_for_site_map():
    x = np.empty(10**5)
    x[0] = 0.123
    for k in range(1, x.size):
        x[k] = map_T(0.3, x[k - 1])
    acf = [abs(en.autocorrelation(x, lag)) for lag in range(1, 21)]
    assert acf[-1] < 0.05


def test_switch_and_occupation_counts():
    s = np.array([0.1, -0.2, 0.0, -0.1, 0.3, 0.2])
    assert en.sign_switches(s) == 2
    assert en.occupation_asymmetry(s) == pytest.approx(1 / 5)
