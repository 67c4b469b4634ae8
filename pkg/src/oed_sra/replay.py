"""Replay a run log: recompute estimates from the logged experiments and diff.

Synthetic oracles are queried again so that a corrupted outcome is caught
at the iteration where it was recorded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, Oracle, build_problem
from .model_graph import Decision, Experiment
from .session import FORMAT_VERSION, SessionConfig, estimate_state

TOL = 1e-9
FIELDS = ("alpha_mean", "h1", "h2", "h3", "v_k")


@dataclass
class ReplayResult:
    ok: bool
    message: str
    k: int | None = None
    n_checked: int = 0


def _num(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return float(v)


def _close(a: float, b: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= TOL * max(1.0, abs(a), abs(b))


def replay_lines(lines) -> ReplayResult:
    records = [json.loads(ln) for ln in lines if ln.strip()]
    if not records or records[0].get("type") != "header":
        return ReplayResult(False, "log has no header record")
    head = records[0]
    if head.get("format_version") != FORMAT_VERSION:
        return ReplayResult(False, f"incompatible log format {head.get('format_version')!r}")
    seed = int(head["seed"])
    try:
        problem = build_problem(head["problem"], seed)
    except ConfigError:
        problem = build_problem(head["problem"], seed, interactive=True, input_fn=_no_input)
    cfg = SessionConfig.from_dict(head["config"])
    oracle = problem.oracle if isinstance(problem.oracle, Oracle) else None
    graph = problem.graph0
    n = 0
    for rec in records[1:]:
        if rec.get("type") != "iteration":
            continue
        k = rec["k"]
        if k != len(graph.history):
            return ReplayResult(False, f"record k={k} out of sequence", k, n)
        est = estimate_state(graph, cfg, k).estimate.to_dict()
        for f in FIELDS:
            if not _close(_num(rec[f]), float(est[f])):
                return ReplayResult(False, f"k={k}: {f} logged {rec[f]!r}, recomputed {est[f]!r}", k, n)
        n += 1
        if rec.get("decision") is None or rec.get("outcome") is None:
            continue
        decision = Decision.from_dict(rec["decision"])
        outcome = float(rec["outcome"])
        if oracle is not None:
            fresh = float(oracle(decision, k))
            if not _close(outcome, fresh):
                return ReplayResult(False, f"k={k}: outcome logged {outcome!r}, oracle gives {fresh!r}", k, n)
        graph = graph.update(Experiment(decision, outcome), refit=cfg.refit)
    return ReplayResult(True, f"{n} iterations match", None, n)


def replay_file(path: str | Path) -> ReplayResult:
    try:
        return replay_lines(Path(path).read_text().splitlines())
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        return ReplayResult(False, f"malformed log: {exc}")


def _no_input(prompt: str) -> str:
    raise EOFError("replay never prompts")
