import numpy as np
import pytest
from scipy import stats

from oed_sra.estimators import (
    coefficient_of_variation, double_loop_mc, gamma_hat, pruned_expectation, residual_uncertainty,
)
from oed_sra.sampling import Pruning, generate_samples, standard_normal_proposal
from oed_sra.unscented import merwe_sigma_points
from oed_sra.validation import _linear_graph


def test_gamma_hat():
    assert float(gamma_hat(3.0)) == pytest.approx(1.3481e-3, abs=1e-7)
    assert float(gamma_hat(0.0)) == pytest.approx(0.25)
    assert float(gamma_hat(np.inf)) == 0.0


def test_cov():
    assert coefficient_of_variation(0.01, 1e-6) == pytest.approx(0.1)
    assert coefficient_of_variation(0.0, 1e-6) == np.inf


def test_pruned_expectation_hand_computed():
    w = np.array([1.0, 2.0, 0.5, 1.5, 1.0])
    pr = Pruning(3.0, np.array([0, 2, 4]), np.array([1, 3]), np.array([True, False]), 5)
    f = np.array([1.0, 0.0])  # f on the first n=2 kept samples
    est = pruned_expectation(w, pr, 2, f)
    # h_bar = 2/5, r_bar = N_tau/(n N0) * 1 = 3/10
    assert est.h_bar == pytest.approx(0.4)
    assert est.r_bar == pytest.approx(0.3)
    assert est.value == pytest.approx(0.7)
    assert est.n_used == 2


def test_full_budget_equals_plain_is():
    rng = np.random.default_rng(0)
    w = rng.uniform(0.5, 1.5, 200)
    f = rng.uniform(size=200) < 0.3
    pr = Pruning(3.0, np.arange(200), np.array([], dtype=int), np.array([], dtype=bool), 200)
    est = pruned_expectation(w, pr, 200, f.astype(float))
    assert est.value == pytest.approx(np.mean(w * f))


def test_residual_uncertainty_linear():
    g = _linear_graph(2.0, 0.3, 2)
    sp = merwe_sigma_points(g.epistemic_dim)
    s = generate_samples(g, standard_normal_proposal(2), 200_000, np.random.default_rng(5), sp)
    ru = residual_uncertainty(s, 3.0, 200_000, sp)
    # exact alpha(theta) = Phi(-theta) with theta ~ N(2, 0.3)
    th = 2.0 + 0.3 * sp.points[:, 0]
    mean_ut = sp.wm @ stats.norm.cdf(-th)
    assert ru.alpha_mean == pytest.approx(mean_ut, rel=0.05)
    assert ru.h1 > 0 and ru.h2 > 0 and ru.h3 >= 0
    assert ru.v_k == pytest.approx(np.sqrt(ru.h1) / ru.alpha_mean)


def test_double_loop_linear():
    g = _linear_graph(2.0, 0.3, 2)
    dl = double_loop_mc(g, 20000, 200, np.random.default_rng(1))
    th = 2.0 + 0.3 * np.random.default_rng(2).standard_normal(400_000)
    ref = stats.norm.cdf(-th)
    assert dl.alpha_mean == pytest.approx(ref.mean(), abs=4 * dl.alpha_se)
    assert dl.h1 == pytest.approx(ref.var(), rel=0.3)
