import numpy as np
import pytest

from oed_sra.config import ConfigError, InteractiveOracle, Oracle, OracleError, build_problem, load_config_text
from oed_sra.model_graph import Decision


def test_yaml_error_position():
    with pytest.raises(ConfigError) as info:
        load_config_text("name: x\ninputs: [1, 2\nnodes: []\n")
    assert info.value.line is not None and info.value.column is not None
    assert "line" in str(info.value)


def test_json_error_position():
    with pytest.raises(ConfigError) as info:
        load_config_text('{"name": "x",\n  "inputs": ]}', ".json")
    assert (info.value.line, info.value.column) == (2, 13)


def test_top_level_must_be_mapping():
    with pytest.raises(ConfigError):
        load_config_text("- 1\n- 2\n")


def test_missing_key_and_unknown_node_type():
    base = {
        "inputs": [{"kind": "normal", "mean": 0.0, "sd": 1.0}],
        "nodes": [{"name": "g", "type": "deterministic", "inputs": ["x[0]"], "function": "bimodal_1d"}],
        "output": "g",
        "decisions": [{"label": "g", "type": "continuous", "target": "g"}],
        "oracle": {"targets": {}},
    }
    with pytest.raises(ConfigError, match="missing top-level key"):
        build_problem({k: v for k, v in base.items() if k != "output"})
    bad = dict(base, nodes=[{"name": "g", "type": "magic", "inputs": []}])
    with pytest.raises(ConfigError, match="unknown type"):
        build_problem(bad)


def test_oracle_noise_is_seeded():
    o = Oracle({"mu_m": {"truth": 1.0}}, seed=4)
    d = Decision("mu_m", None, 0.1, 1.1)
    assert o(d, 3) == o(d, 3)
    assert o(d, 3) != o(d, 4)
    assert Oracle({"mu_m": {"truth": 1.0}})(Decision("mu_m", None, 0.0, 1.0), 0) == 1.0
    with pytest.raises(OracleError):
        o(Decision("other", None, 0.0, 1.0), 0)


def test_interactive_oracle_retries():
    answers = iter(["abc", "nan", "2.5"])
    o = InteractiveOracle(lambda prompt: next(answers), out=open("/dev/null", "w"))
    assert o(Decision("mu_m", None, 0.1, 1.1), 0) == 2.5

    def eof(prompt):
        raise EOFError

    with pytest.raises(OracleError):
        InteractiveOracle(eof)(Decision("mu_m", None, 0.1, 1.1), 0)


def test_lhs_initial_design_size():
    from oed_sra.benchmarks import get_case

    p = get_case("example4", lhs=10).problem(0)
    assert p.graph0.node("p_fe").gp.n_obs == 10
    assert p.n_initial == 10
    X = np.asarray(p.graph0.node("p_fe").gp.X)
    assert len(np.unique(np.round(X, 9), axis=0)) == 10
