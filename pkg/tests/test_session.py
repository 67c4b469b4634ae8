import json
import math

import numpy as np
import pytest

from oed_sra.estimators import ResidualUncertainty
from oed_sra.session import (
    RunLog, SessionConfig, SnapshotError, check_stop, dumps, first_crossing, read_snapshot, restore_state, run,
    snapshot_bytes, substream, summary,
)


def _est(alpha, sd, v=None):
    return ResidualUncertainty(sd**2, 0.0, 0.0, alpha, sd / alpha if v is None else v)


def test_stop_below_target():
    cfg = SessionConfig(stopping="either", alpha_target=1e-3, z=4.0)
    assert check_stop(_est(5e-4, 1e-4), cfg) == "below-target"
    assert check_stop(_est(3e-3, 4e-4), cfg) == "above-target"
    assert check_stop(_est(1e-3, 1e-3), cfg) is None


def test_stop_cov():
    cfg = SessionConfig(v_max=0.05)
    assert check_stop(_est(0.01, 0.0, v=0.049), cfg) == "converged"
    assert check_stop(_est(0.01, 0.0, v=0.051), cfg) is None
    target_only = SessionConfig(stopping="target", alpha_target=1e-3)
    assert check_stop(_est(0.01, 0.0, v=0.0), target_only) == "above-target"


def test_config_validation():
    with pytest.raises(ValueError):
        SessionConfig(tau=1.0)
    with pytest.raises(ValueError):
        SessionConfig(n=20, n0=10)
    with pytest.raises(ValueError):
        SessionConfig(stopping="target")
    with pytest.raises(ValueError, match="unknown session keys"):
        SessionConfig.from_dict({"taus": 3})
    cfg = SessionConfig(double_loop_final=(10, 5))
    assert SessionConfig.from_dict(cfg.to_dict()) == cfg


def test_substreams_are_independent_of_order():
    a = substream(3, 2, "samples").standard_normal(3)
    substream(3, 2, "acquisition").standard_normal(10)
    np.testing.assert_array_equal(a, substream(3, 2, "samples").standard_normal(3))
    assert not np.array_equal(a, substream(3, 2, "proposal").standard_normal(3))


def test_dumps_encodes_infinity():
    assert json.loads(dumps({"v": math.inf, "w": -math.inf})) == {"v": "inf", "w": "-inf"}


def test_example1_quick_run(ex1):
    problem, cfg = ex1
    log = RunLog()
    st = run(cfg, problem.graph0, problem.families, problem.oracle, log_to=log, header={"case": "example1"})
    assert st.stopped_reason == "converged"
    assert len(st.history) == st.k and len(st.estimates) == st.k + 1
    recs = [json.loads(ln) for ln in log.lines]
    assert recs[0]["type"] == "header" and recs[0]["format_version"] == 1
    its = [r for r in recs if r["type"] == "iteration"]
    assert [r["k"] for r in its] == list(range(st.k + 1))
    assert its[-1]["stop"] == "converged"
    assert its[-1]["cost_cum"] == pytest.approx(sum(e.decision.cost for e in st.history))
    s = summary(st, problem.n_initial)
    assert s["n_calls"] == st.k + problem.n_initial
    assert first_crossing(st, cfg.v_max)["k"] == st.k


def test_kmax_contract(ex1):
    problem, cfg = ex1
    cfg = SessionConfig.from_dict({**cfg.to_dict(), "v_max": 1e-12, "k_max": 5})
    st = run(cfg, problem.graph0, problem.families, problem.oracle)
    assert st.stopped_reason == "k_max" and st.k == 5 and len(st.history) == 5


def test_snapshot_round_trip_and_resume(ex1):
    problem, cfg = ex1
    full = run(cfg, problem.graph0, problem.families, problem.oracle)
    assert full.k >= 2
    saved = {}

    class Stop(Exception):
        pass

    def cb(state):
        if state.k == 1:
            saved["bytes"] = snapshot_bytes(state, cfg, {"case": "example1"})
            raise Stop

    with pytest.raises(Stop):
        run(cfg, problem.graph0, problem.families, problem.oracle, on_iteration=cb)
    payload = read_snapshot(saved["bytes"])
    state, cfg2 = restore_state(payload, problem.graph0)
    assert cfg2 == cfg
    assert snapshot_bytes(state, cfg2, payload["problem"]) == saved["bytes"]
    resumed = run(cfg2, problem.graph0, problem.families, problem.oracle, state=state)
    assert resumed.k == full.k
    assert [e.to_dict() for e in resumed.estimates] == [e.to_dict() for e in full.estimates]


def test_snapshot_corruption_and_version(ex1):
    problem, cfg = ex1
    st = run(cfg, problem.graph0, problem.families, problem.oracle)
    data = snapshot_bytes(st, cfg, {})
    bad = data.replace(b'"cost_cum":', b'"cost_cum":1', 1)
    with pytest.raises(SnapshotError, match="checksum|JSON"):
        read_snapshot(bad)
    doc = json.loads(data)
    doc["format_version"] = 99
    with pytest.raises(SnapshotError, match="incompatible"):
        read_snapshot(json.dumps(doc).encode())


def test_oracle_failure_preserves_state(ex1):
    from oed_sra.session import SessionAborted

    problem, cfg = ex1

    def oracle(d, k):
        if k == 1:
            raise RuntimeError("lab closed")
        return problem.oracle(d, k)

    with pytest.raises(SessionAborted) as info:
        run(cfg, problem.graph0, problem.families, oracle)
    st = info.value.state
    assert st.stopped_reason == "oracle-error" and st.k == 1 and len(st.history) == 1
