import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oed_sra.unscented import PropagationError, SigmaPointError, merwe_sigma_points, propagate, sigma_points_for


def test_one_dimensional_defaults():
    sp = merwe_sigma_points(1)
    np.testing.assert_allclose(sp.points.ravel(), [0.0, 1.55885, -1.55885], atol=1e-5)
    np.testing.assert_allclose(sp.wm, [0.58848, 0.20576, 0.20576], atol=1e-5)
    assert sp.wc[0] == pytest.approx(2.77848, abs=1e-5)


def test_four_dimensional_spread():
    sp = merwe_sigma_points(4)
    assert len(sp) == 9
    assert sp.kappa == -1
    np.testing.assert_allclose(np.linalg.norm(sp.points[1:], axis=1), 0.9 * np.sqrt(3.0))


@pytest.mark.parametrize("n", range(1, 13))
def test_reconstructs_standard_normal(n):
    sp = merwe_sigma_points(n)
    assert sp.wm.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(sp.wm @ sp.points, 0.0, atol=1e-10)
    cov = np.einsum("i,ij,ik->jk", sp.wc, sp.points, sp.points)
    np.testing.assert_allclose(cov, np.eye(n), atol=1e-10)


def test_square_mean_is_one():
    mean, _ = propagate(merwe_sigma_points(1), lambda u: u[0] ** 2)
    assert mean == pytest.approx(1.0, abs=1e-10)


def test_constant_map():
    mean, var = propagate(merwe_sigma_points(3), lambda u: 4.2)
    assert mean == pytest.approx(4.2) and var == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_affine_exact(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, n))
    b = rng.normal(size=3)
    mean, cov = propagate(merwe_sigma_points(n), lambda u: A @ u + b)
    np.testing.assert_allclose(mean, b, atol=1e-9)
    np.testing.assert_allclose(cov, A @ A.T, atol=1e-9)


def test_errors():
    with pytest.raises(SigmaPointError):
        merwe_sigma_points(3, kappa=-3.0)
    with pytest.raises(SigmaPointError):
        merwe_sigma_points(2, alpha=0.0)
    with pytest.raises(PropagationError, match="sigma point"):
        propagate(merwe_sigma_points(1), lambda u: np.inf if u[0] > 0 else 0.0)


def test_affine_transform_of_points():
    sp = merwe_sigma_points(2)
    pts, wm, wc = sigma_points_for(sp, lambda u: 1.0 + 2.0 * u)
    np.testing.assert_allclose(pts, 1.0 + 2.0 * sp.points)
    np.testing.assert_allclose(wm, sp.wm)
