import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import distance

from oed_sra.gp import GpSurrogate, IllConditionedModelError, Kernel, make_gp, matern52


def _matern_ref(A, B, sigma_c, ls):
    r = distance.cdist(np.atleast_2d(A) / ls, np.atleast_2d(B) / ls)
    return sigma_c**2 * (1 + np.sqrt(5) * r + 5 * r**2 / 3) * np.exp(-np.sqrt(5) * r)


def test_matern_unit_distance():
    k = Kernel(1.0, [1.0])
    assert matern52(k, [0.0], [1.0]) == pytest.approx(0.5239941, abs=1e-7)
    assert matern52(k, [0.3], [0.3]) == pytest.approx(1.0)


def test_anisotropic_kernel_matches_reference():
    rng = np.random.default_rng(1)
    A, B = rng.normal(size=(6, 3)), rng.normal(size=(4, 3))
    k = Kernel(2.5, [0.5, 2.0, 1.3])
    np.testing.assert_allclose(k(A, B), _matern_ref(A, B, 2.5, np.array([0.5, 2.0, 1.3])), rtol=1e-12)


def test_posterior_against_dense_algebra():
    rng = np.random.default_rng(2)
    X = rng.uniform(-2, 2, size=(5, 2))
    y = np.sin(X[:, 0]) + X[:, 1]
    gp = make_gp(0.3, 1.2, [0.8, 1.5])
    for xi, yi in zip(X, y):
        gp = gp.condition(xi, yi)
    Q = rng.uniform(-3, 3, size=(7, 2))
    ls = np.array([0.8, 1.5])
    K = _matern_ref(X, X, 1.2, ls)
    Ks = _matern_ref(Q, X, 1.2, ls)
    mean_ref = 0.3 + Ks @ np.linalg.solve(K, y - 0.3)
    var_ref = 1.44 - np.einsum("ij,ji->i", Ks, np.linalg.solve(K, Ks.T))
    mean, var = gp.mean_var(Q)
    np.testing.assert_allclose(mean, mean_ref, atol=1e-8)
    np.testing.assert_allclose(var, np.maximum(var_ref, 0), atol=1e-8)


def test_interpolation_and_prior_far_away():
    gp = make_gp(-0.5, np.sqrt(0.1), [0.5]).condition([-0.5], 0.2)
    m, v = gp.mean_var(np.array([[-0.5], [50.0]]))
    assert m[0] == pytest.approx(0.2, abs=1e-8) and v[0] == pytest.approx(0.0, abs=1e-8)
    assert m[1] == pytest.approx(-0.5, abs=1e-3) and v[1] == pytest.approx(0.1, rel=1e-6)


def test_sequential_equals_batch():
    a, b = np.array([0.1, -0.4]), np.array([1.2, 0.5])
    g1 = make_gp(0.0, 1.0, [1.0, 0.7]).condition(a, 1.0).condition(b, -0.5)
    g2 = make_gp(0.0, 1.0, [1.0, 0.7]).condition(b, -0.5).condition(a, 1.0)
    Q = np.random.default_rng(3).normal(size=(5, 2))
    for x, y in zip(g1.mean_var(Q), g2.mean_var(Q)):
        np.testing.assert_allclose(x, y, atol=1e-8)


def test_duplicate_point_is_absorbed_or_rejected():
    gp = make_gp(0.0, 1.0, [1.0]).condition([0.0], 1.0)
    same = gp.condition([0.0], 1.0)
    assert same.n_obs in (1, 2)
    with pytest.raises(IllConditionedModelError):
        gp.condition([0.0], 5.0)


def test_noisy_observation_keeps_variance():
    gp = make_gp(0.0, 1.0, [1.0], noise_sd=0.5).condition([0.0], 1.0)
    _, v = gp.mean_var(np.array([[0.0]]))
    assert v[0] == pytest.approx(1.0 - 1.0 / 1.25)


def test_round_trip_dict():
    gp = make_gp(1.0, 2.0, [0.3, 4.0]).condition([0.0, 1.0], 3.0).condition([1.0, 1.0], 2.5)
    back = GpSurrogate.from_dict(gp.to_dict())
    Q = np.array([[0.5, 0.5], [2.0, -1.0]])
    for x, y in zip(gp.mean_var(Q), back.mean_var(Q)):
        np.testing.assert_allclose(x, y, rtol=1e-14)


def test_refit_prefers_long_lengthscale_for_smooth_data():
    rng = np.random.default_rng(4)
    X = np.linspace(0, 10, 12)
    smooth = make_gp(0.0, 1.0, [1.0])
    rough = make_gp(0.0, 1.0, [1.0])
    for x, a, b in zip(X, np.sin(X / 5.0), rng.normal(size=12)):
        smooth = smooth.condition([x], a)
        rough = rough.condition([x], b)
    ls_smooth = smooth.refit_hyperparameters(3).kernel.lengthscales[0]
    ls_rough = rough.refit_hyperparameters(3).kernel.lengthscales[0]
    assert ls_smooth > ls_rough


def test_refit_below_threshold_is_identity():
    gp = make_gp(0.0, 1.0, [1.0]).condition([0.0], 1.0)
    assert gp.refit_hyperparameters(5).kernel == gp.kernel


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6, unique=True), st.integers(0, 1000))
def test_posterior_variance_never_exceeds_prior(xs, seed):
    xs = sorted(xs)
    if np.min(np.diff(xs), initial=1.0) < 1e-2:
        return
    rng = np.random.default_rng(seed)
    gp = make_gp(0.0, 1.5, [0.7])
    for x in xs:
        gp = gp.condition([x], float(rng.normal()))
    _, v = gp.mean_var(np.linspace(-6, 6, 41)[:, None])
    assert np.all(v <= 1.5**2 + 1e-8) and np.all(v >= 0)
