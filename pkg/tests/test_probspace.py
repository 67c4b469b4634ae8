import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oed_sra.probspace import DomainError, Gumbel, LogNormal, Marginal, Normal, RandomVector


def test_normal_round_trip_and_density():
    rv = RandomVector([Normal(-0.5, 0.2), Normal(3.0, 2.0)])
    x = np.array([[-0.3, 1.0], [-0.9, 7.5]])
    u = rv.to_standard_normal(x)
    np.testing.assert_allclose(u, [[1.0, -1.0], [-2.0, 2.25]])
    np.testing.assert_allclose(rv.from_standard_normal(u), x)
    ref = stats.norm(-0.5, 0.2).logpdf(x[:, 0]) + stats.norm(3.0, 2.0).logpdf(x[:, 1])
    np.testing.assert_allclose(rv.log_density(x), ref)


def test_gumbel_moments_match_pipeline_load():
    g = Gumbel(15.75, 0.4725)
    # scipy parameterization of the maximum Gumbel from mean and sd
    scale = 0.4725 * math.sqrt(6) / math.pi
    loc = 15.75 - np.euler_gamma * scale
    ref = stats.gumbel_r(loc, scale)
    xs = np.array([14.9, 15.75, 17.2])
    np.testing.assert_allclose(g.cdf(xs), ref.cdf(xs), rtol=1e-12)
    np.testing.assert_allclose(g.from_u(np.array([-1.0, 0.0, 2.5])), ref.ppf(stats.norm.cdf([-1.0, 0.0, 2.5])))
    assert ref.mean() == pytest.approx(15.75)
    assert ref.std() == pytest.approx(0.4725)


def test_lognormal_support_error():
    rv = RandomVector([LogNormal(1.0, 0.3)])
    with pytest.raises(DomainError):
        rv.to_standard_normal(np.array([[-1.0]]))
    assert rv.log_density(np.array([[-1.0]]))[0] == -np.inf


def test_marginal_from_dict_variants():
    assert Marginal.from_dict({"kind": "normal", "mean": 20.0, "cov": 0.03}).sd == pytest.approx(0.6)
    assert Marginal.from_dict({"kind": "normal", "mean": 200.0, "var": 1.49}).sd == pytest.approx(math.sqrt(1.49))
    with pytest.raises(ValueError):
        Marginal.from_dict({"kind": "normal", "mean": 1.0})
    with pytest.raises(ValueError):
        Marginal("weibull", 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.sampled_from(["normal", "gumbel", "lognormal"]))
def test_transform_round_trip(u, kind):
    m = Marginal(kind, 2.0, 0.5)
    x = m.from_u(np.array([u]))
    assert float(m.to_u(x)[0]) == pytest.approx(u, abs=1e-7)
