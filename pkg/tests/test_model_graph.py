import numpy as np
import pytest

from oed_sra.gp import make_gp
from oed_sra.model_graph import (
    Decision, Deterministic, Experiment, GraphError, ModelGraph, NormalParam, SurrogateNode, conjugate_normal,
)
from oed_sra.probspace import Normal, RandomVector


def _graph():
    rv = RandomVector([Normal(0.0, 1.0), Normal(1.0, 0.5)])
    nodes = [
        Deterministic("g", ("s", "theta"), lambda s, th: th - s, "diff"),
        NormalParam("theta", 2.0, 0.3),
        SurrogateNode("s", ("x[0]", "x[1]"), make_gp(0.0, 1.0, [1.0, 1.0])),
    ]
    return ModelGraph(rv, tuple(nodes), "g")


def test_topological_order_and_coordinates():
    g = _graph()
    names = [n.name for n in g.nodes]
    assert names.index("s") < names.index("g") and names.index("theta") < names.index("g")
    assert g.epistemic_dim == 2
    assert sorted(g.epistemic_nodes) == ["s", "theta"]
    assert g.descendants("theta") == {"g"}


def test_cycle_and_missing_output():
    rv = RandomVector([Normal(0, 1)])
    with pytest.raises(GraphError):
        ModelGraph(rv, (Deterministic("a", ("b",), lambda b: b), Deterministic("b", ("a",), lambda a: a)), "a")
    with pytest.raises(GraphError):
        ModelGraph(rv, (Deterministic("a", ("x[0]",), lambda x: x),), "zzz")


def test_evaluate_at_prior():
    g = _graph()
    x = np.array([[0.0, 1.0], [1.0, 2.0]])
    e = np.zeros(g.epistemic_dim)
    np.testing.assert_allclose(g.eval_xi_hat(x, e), [2.0, 2.0])
    e_theta = np.zeros(2)
    e_theta[g.e_coordinate("theta")] = 1.0
    np.testing.assert_allclose(g.eval_xi_hat(x, e_theta), [2.3, 2.3])


def test_conjugate_update():
    m, s = conjugate_normal(0.5, 0.15, 0.31, 0.02)
    assert m == pytest.approx(0.3133, abs=1e-4)
    assert s == pytest.approx(0.01983, abs=1e-5)
    assert conjugate_normal(1.0, 0.0, 5.0, 0.1) == (1.0, 0.0)
    assert conjugate_normal(1.0, 0.2, 5.0, 0.0) == (5.0, 0.0)


def test_update_is_pure_and_records_history():
    g0 = _graph()
    d = Decision("theta", None, 0.02, 1.0)
    g1 = g0.update(Experiment(d, 1.9))
    assert g0.node("theta").sd == 0.3 and len(g0.history) == 0
    assert len(g1.history) == 1
    assert g1.node("theta").sd < 0.3


def test_surrogate_update_interpolates():
    g = _graph().update(Experiment(Decision("s", (0.0, 1.0), 0.0, 1.0), 0.7))
    e = np.zeros(2)
    e[g.e_coordinate("theta")] = 0.5
    e[g.e_coordinate("s")] = 0.5
    # the GP sd left by the jitter at the observed point is about 1e-5
    np.testing.assert_allclose(g.eval_xi_hat(np.array([[0.0, 1.0]]), e), 2.0 + 0.3 * 0.5 - 0.7, atol=1e-4)
    m, v = g.node("s").gp.mean_var(np.array([[0.0, 1.0]]))
    assert m[0] == pytest.approx(0.7) and v[0] == pytest.approx(0.0, abs=1e-9)


def test_invalid_decisions():
    g = _graph()
    with pytest.raises(GraphError):
        g.check_decision(Decision("g", None, 0.0, 1.0))
    with pytest.raises(GraphError):
        g.check_decision(Decision("s", (0.0,), 0.0, 1.0))


def test_state_round_trip():
    g0 = _graph()
    g1 = g0.update(Experiment(Decision("theta", None, 0.1, 1.0), 2.2))
    g1 = g1.update(Experiment(Decision("s", (0.5, 0.5), 0.0, 1.0), -0.1))
    g2 = g0.load_state(g1.state_dict())
    x = np.random.default_rng(0).normal(size=(10, 2))
    e = np.array([0.3, -1.0])
    np.testing.assert_array_equal(g1.eval_xi_hat(x, e), g2.eval_xi_hat(x, e))


def test_decision_dict_round_trip():
    d = Decision("p_fe", (1.0, 2.0), 0.0, 1.0, "p_fe")
    assert Decision.from_dict(d.to_dict()) == d
    assert d.label == "p_fe"
    assert Decision("d_t", None, 0.02, 1.13).label == "d_t"
