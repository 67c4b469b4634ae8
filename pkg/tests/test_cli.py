import json

import pytest

from oed_sra.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_ORACLE, main


@pytest.fixture(scope="module")
def ex1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex1")
    assert main(["run", "--case", "example1", "--quick", "--kmax", "10", "--out", str(out)]) == EXIT_OK
    return out


def test_run_outputs(ex1_run, capsys):
    for f in ("run.ndjson", "summary.csv", "alpha_trace.csv", "snapshot.json"):
        assert (ex1_run / f).exists()
    recs = [json.loads(ln) for ln in (ex1_run / "run.ndjson").read_text().splitlines()]
    assert recs[0]["type"] == "header" and recs[-1]["type"] == "final"
    assert recs[-1]["stopped_reason"] == "converged"
    assert "n_calls" in recs[-1]


def test_replay_fresh_log(ex1_run, capsys):
    assert main(["replay", str(ex1_run / "run.ndjson")]) == EXIT_OK
    assert capsys.readouterr().out.startswith("OK")


def _flip_outcome_digit(text: str, k: int) -> str:
    lines = text.splitlines()
    for i, ln in enumerate(lines):
        rec = json.loads(ln)
        if rec.get("type") == "iteration" and rec["k"] == k:
            s = repr(rec["outcome"])
            pos = s.index(".") + 1
            s2 = s[:pos] + chr(ord(s[pos]) ^ 1) + s[pos + 1:]
            lines[i] = ln.replace(f'"outcome":{s}', f'"outcome":{s2}')
            assert lines[i] != ln
    return "\n".join(lines) + "\n"


def test_replay_detects_flipped_outcome(ex1_run, tmp_path, capsys):
    bad = tmp_path / "bad.ndjson"
    bad.write_text(_flip_outcome_digit((ex1_run / "run.ndjson").read_text(), 1))
    assert main(["replay", str(bad)]) == EXIT_FAIL
    assert "k=1" in capsys.readouterr().out


def test_replay_malformed(tmp_path):
    p = tmp_path / "x.ndjson"
    p.write_text("not json\n")
    assert main(["replay", str(p)]) == EXIT_FAIL


def test_unknown_case_lists_builtins(tmp_path, capsys):
    assert main(["run", "--case", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "example1" in capsys.readouterr().err
    assert main(["validate", "--case", "nope"]) == EXIT_CONFIG


def test_config_parse_error_has_position(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("name: x\ninputs: [1, 2\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "line" in capsys.readouterr().err


def test_config_file_run(tmp_path):
    from oed_sra.benchmarks import export_config

    cfg = export_config("example1", tmp_path / "ex1.yaml")
    assert main(["run", "--config", str(cfg), "--quick", "--out", str(tmp_path / "o")]) == EXIT_OK


def test_interactive_without_input_is_oracle_error(tmp_path, monkeypatch, capsys):
    def eof(prompt=""):
        raise EOFError

    monkeypatch.setattr("builtins.input", eof)
    cfg = {
        "inputs": [{"kind": "normal", "mean": 0.0, "sd": 1.0}],
        "nodes": [
            {"name": "theta", "type": "normal_param", "mean": 2.0, "sd": 0.5},
            {"name": "g", "type": "deterministic", "inputs": ["theta", "x[0]"], "function": "difference"},
        ],
        "output": "g",
        "decisions": [{"label": "theta", "type": "finite", "decisions": [{"target": "theta", "noise_sd": 0.1}]}],
        "session": {"v_max": 0.01},
    }
    path = tmp_path / "lab.json"
    path.write_text(json.dumps(cfg))
    code = main(["run", "--config", str(path), "--interactive", "--quick", "--out", str(tmp_path / "o")])
    assert code == EXIT_ORACLE
    assert (tmp_path / "o" / "snapshot.json").exists()
