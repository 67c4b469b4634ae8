"""The myopic design loop, stopping rules, run logs and snapshots.

Every stochastic phase of iteration ``k`` draws from its own generator
seeded by ``(seed, k, label)``, so a run is reproducible bit for bit and a
restored snapshot continues exactly like the uninterrupted run.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .acquisition import AcquisitionContext, AcquisitionSpec, optimize_decision
from .estimators import ResidualUncertainty, double_loop_mc, residual_uncertainty
from .model_graph import Decision, Experiment, ModelGraph
from .sampling import ProposalMixture, build_proposal, generate_samples, hypercube_proposal, prune
from .unscented import merwe_sigma_points

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
STOPPING = ("cov", "target", "either")


class SessionError(RuntimeError):
    pass


class SnapshotError(RuntimeError):
    pass


class SessionAborted(RuntimeError):
    """Raised when the oracle fails; ``state`` holds everything done so far."""

    def __init__(self, message: str, state: "SessionState"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class SessionConfig:
    tau: float = 3.0
    n0: int = 10_000
    n: int = 1_000
    k_max: int = 100
    v_max: float = 0.05
    criterion: str = "h3"
    normalization: str = "none"
    stopping: str = "cov"
    alpha_target: float | None = None
    z: float = 4.0
    seed: int = 0
    proposal: str = "mixture"
    restarts: int = 24
    p_min: float = 1e-3
    conservative_tails: bool = False
    refit: bool = True
    n_starts: int = 64
    n_refine: int = 4
    halvings: int = 20
    double_loop_final: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.tau > math.sqrt(2.0):
            raise ValueError(f"tau must exceed sqrt(2), got {self.tau}")
        if not 0 < self.n <= self.n0:
            raise ValueError(f"need 0 < n <= n0, got n={self.n}, n0={self.n0}")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if self.k_max < 0:
            raise ValueError("k_max must be nonnegative")
        if self.stopping not in STOPPING:
            raise ValueError(f"stopping must be one of {STOPPING}")
        if self.stopping != "cov" and self.alpha_target is None:
            raise ValueError("target stopping needs alpha_target")
        if self.proposal not in ("mixture", "hypercube"):
            raise ValueError(f"unknown proposal {self.proposal!r}")
        AcquisitionSpec(self.criterion, self.normalization)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SessionConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown session keys: {', '.join(sorted(unknown))}")
        d = dict(d)
        if d.get("double_loop_final") is not None:
            d["double_loop_final"] = tuple(int(v) for v in d["double_loop_final"])
        if isinstance(d.get("v_max"), str):
            d["v_max"] = float(d["v_max"])
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        if d["double_loop_final"] is not None:
            d["double_loop_final"] = list(d["double_loop_final"])
        return d

    @property
    def acquisition(self) -> AcquisitionSpec:
        return AcquisitionSpec(self.criterion, self.normalization, self.n_starts, self.n_refine, self.halvings)


def substream(seed: int, k: int, label: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(k), zlib.crc32(label.encode())])


@dataclass
class SessionState:
    k: int
    graph: ModelGraph
    estimates: list = field(default_factory=list)
    records: list = field(default_factory=list)
    stopped_reason: str | None = None
    cost_cum: float = 0.0

    @property
    def history(self) -> tuple:
        return self.graph.history

    @property
    def latest(self) -> ResidualUncertainty:
        return self.estimates[-1]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for ex in self.history:
            out[ex.decision.label] = out.get(ex.decision.label, 0) + 1
        return out


def check_stop(est: ResidualUncertainty, config: SessionConfig) -> str | None:
    """Stop reason for the current estimates, or ``None`` to continue."""
    if config.stopping in ("target", "either"):
        sd = math.sqrt(max(est.h1, 0.0))
        if est.alpha_mean + config.z * sd < config.alpha_target:
            return "below-target"
        if est.alpha_mean - config.z * sd > config.alpha_target:
            return "above-target"
    if config.stopping in ("cov", "either") and est.v_k <= config.v_max:
        return "converged"
    return None


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _clean(d):
    if isinstance(d, dict):
        return {k: _clean(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_clean(v) for v in d]
    if isinstance(d, (np.floating, np.integer)):
        return _clean(d.item())
    return _jsonable(d)


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class IterationResult:
    estimate: ResidualUncertainty
    samples: Any
    pruning: Any
    proposal: Any


def estimate_state(graph: ModelGraph, config: SessionConfig, k: int) -> IterationResult:
    """Steps (1)-(2) of an iteration: proposal, samples, pruning, estimates."""
    sp = merwe_sigma_points(graph.epistemic_dim)
    if config.proposal == "hypercube":
        proposal = hypercube_proposal(graph.rv.dim, config.p_min)
    else:
        proposal = build_proposal(graph, sp, config.restarts, substream(config.seed, k, "proposal"), config.p_min)
    samples = generate_samples(graph, proposal, config.n0, substream(config.seed, k, "samples"), sp)
    pr = prune(samples, config.tau)
    est = residual_uncertainty(samples, pr, config.n, sp, config.conservative_tails)
    return IterationResult(est, samples, pr, proposal)


class RunLog:
    """Newline-delimited JSON run log (optional) kept in memory as well."""

    def __init__(self, path: str | Path | None = None, timing: bool = False):
        self.path = Path(path) if path else None
        self.timing = timing
        self.lines: list[str] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def write(self, record: dict):
        line = dumps(record)
        self.lines.append(line)
        if self.path:
            with self.path.open("a") as fh:
                fh.write(line + "\n")


def run(config: SessionConfig, graph0: ModelGraph, decision_space: Sequence, oracle: Callable[[Decision, int], float],
        state: SessionState | None = None, log_to: RunLog | None = None, header: dict | None = None,
        on_iteration: Callable[[SessionState], None] | None = None) -> SessionState:
    """Run the myopic loop until a stop rule fires or ``k_max`` experiments are done.

    Parameters
    ----------
    state : SessionState, optional
        Continue a restored session instead of starting from ``graph0``.
    log_to : RunLog, optional
        Receives one record per iteration (and a header when ``header`` is given).

    Raises
    ------
    SessionAborted
        If the oracle fails; the exception carries the state so far.
    """
    if state is None:
        state = SessionState(0, graph0)
        if log_to is not None and header is not None:
            log_to.write({"type": "header", "format_version": FORMAT_VERSION, **header,
                          "config": config.to_dict()})
    spec = config.acquisition
    while state.stopped_reason is None:
        t0 = time.perf_counter()
        k = state.k
        it = estimate_state(state.graph, config, k)
        est = it.estimate
        if len(state.estimates) == k:
            state.estimates.append(est)
        reason = check_stop(est, config)
        if reason is None and k >= config.k_max:
            reason = "k_max"
        rec = {"type": "iteration", "k": k, **est.to_dict(), "proposal": it.proposal.kind,
               "n_centers": len(getattr(it.proposal, "centers", ())), "decision": None, "outcome": None,
               "score": None, "family_scores": None, "cost_cum": state.cost_cum, "wall_ms": None}
        if reason is not None:
            state.stopped_reason = reason + ("-initial" if k == 0 and reason == "converged" else "")
            rec["stop"] = state.stopped_reason
            _finish(rec, t0, log_to, state)
            break
        ctx = AcquisitionContext(state.graph, it.samples, it.pruning, config.n, merwe_sigma_points(state.graph.epistemic_dim))
        anchors = None
        if isinstance(it.proposal, ProposalMixture):
            anchors = state.graph.rv.from_standard_normal(it.proposal.centers)
        decision, score, traces = optimize_decision(ctx, decision_space, spec, substream(config.seed, k, "acquisition"),
                                                    anchors)
        rec["decision"] = decision.to_dict()
        rec["score"] = score
        rec["family_scores"] = {t.label: t.best_score for t in traces}
        try:
            outcome = float(oracle(decision, k))
            if not math.isfinite(outcome):
                raise ValueError("non-finite outcome")
        except Exception as exc:  # noqa: BLE001
            state.stopped_reason = "oracle-error"
            rec["stop"] = "oracle-error"
            _finish(rec, t0, log_to, state)
            raise SessionAborted(f"oracle failed at k={k}: {exc}", state) from exc
        state.graph = state.graph.update(Experiment(decision, outcome), refit=config.refit)
        state.cost_cum += decision.cost
        state.k = k + 1
        rec["outcome"] = outcome
        rec["cost_cum"] = state.cost_cum
        _finish(rec, t0, log_to, state)
        if on_iteration is not None:
            on_iteration(state)
    if config.double_loop_final:
        n1, n2 = config.double_loop_final
        dl = double_loop_mc(state.graph, n1, n2, substream(config.seed, state.k, "double-loop"))
        state.records.append({"type": "double_loop", "k": state.k, "alpha_mean": dl.alpha_mean, "h1": dl.h1,
                              "h2": dl.h2, "h3": dl.h3})
        if log_to is not None:
            log_to.write(state.records[-1])
    return state


def _finish(rec, t0, log_to, state):
    if log_to is not None and log_to.timing:
        rec["wall_ms"] = round((time.perf_counter() - t0) * 1e3, 3)
    state.records.append(rec)
    if log_to is not None:
        log_to.write(rec)


# -- snapshots -------------------------------------------------------------


def snapshot_bytes(state: SessionState, config: SessionConfig, problem_ref: dict) -> bytes:
    payload = {
        "problem": problem_ref,
        "config": config.to_dict(),
        "state": {
            "k": state.k,
            "graph": state.graph.state_dict(),
            "estimates": [asdict(e) for e in state.estimates],
            "records": state.records,
            "stopped_reason": state.stopped_reason,
            "cost_cum": state.cost_cum,
        },
    }
    body = dumps(payload)
    digest = hashlib.sha256(body.encode()).hexdigest()
    return dumps({"format_version": FORMAT_VERSION, "sha256": digest, "payload": json.loads(body)}).encode()


def save_snapshot(path: str | Path, state: SessionState, config: SessionConfig, problem_ref: dict) -> Path:
    path = Path(path)
    path.write_bytes(snapshot_bytes(state, config, problem_ref))
    return path


def read_snapshot(data: bytes) -> dict:
    try:
        doc = json.loads(data.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"snapshot is not valid JSON: {exc}") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise SnapshotError(
            f"incompatible snapshot format {doc.get('format_version')!r}; this version reads {FORMAT_VERSION}"
        )
    body = dumps(doc.get("payload"))
    if hashlib.sha256(body.encode()).hexdigest() != doc.get("sha256"):
        raise SnapshotError("snapshot checksum mismatch (file corrupted)")
    return doc["payload"]


def _float(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return v


def restore_state(payload: dict, graph0: ModelGraph) -> tuple[SessionState, SessionConfig]:
    """Rebuild a state from a snapshot payload on top of the case's initial graph."""
    st = payload["state"]
    graph = graph0.load_state(st["graph"])
    ests = []
    for e in st["estimates"]:
        e = {k: _float(v) for k, v in e.items()}
        e["alpha_sigma"] = tuple(e.get("alpha_sigma", ()))
        ests.append(ResidualUncertainty(**e))
    state = SessionState(st["k"], graph, ests, list(st["records"]), st["stopped_reason"], st["cost_cum"])
    return state, SessionConfig.from_dict(payload["config"])


# -- reports -----------------------------------------------------------------


def summary(state: SessionState, n_initial: int = 0) -> dict[str, Any]:
    est = state.latest
    sd = math.sqrt(max(est.h1, 0.0))
    return {
        "k": state.k,
        "n_calls": state.k + n_initial,
        "stopped_reason": state.stopped_reason,
        "alpha_mean": est.alpha_mean,
        "alpha_sd": sd,
        "alpha_lo": est.alpha_mean - 2 * sd,
        "alpha_hi": est.alpha_mean + 2 * sd,
        "v_k": est.v_k,
        "cost_cum": state.cost_cum,
        "counts": state.counts(),
    }


def write_summary_csv(path: str | Path, rows: list[dict]):
    path = Path(path)
    keys = [k for k in rows[0] if k != "counts"]
    count_keys = sorted({c for r in rows for c in r.get("counts", {})})
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys + [f"n_{c}" for c in count_keys])
        for r in rows:
            w.writerow([r[k] for k in keys] + [r.get("counts", {}).get(c, 0) for c in count_keys])


def write_plot_table(path: str | Path, state: SessionState):
    """``k, alpha_mean, sd, mean -+ 2 sd, v_k`` per iteration."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "alpha_mean", "alpha_sd", "lower_2sd", "upper_2sd", "v_k"])
        for k, est in enumerate(state.estimates):
            sd = math.sqrt(max(est.h1, 0.0))
            w.writerow([k, est.alpha_mean, sd, est.alpha_mean - 2 * sd, est.alpha_mean + 2 * sd, est.v_k])


def first_crossing(state_or_records, v_max: float) -> dict | None:
    """The first iteration record whose estimates satisfy ``v_k <= v_max``."""
    records = state_or_records.records if isinstance(state_or_records, SessionState) else state_or_records
    for r in records:
        if r.get("type") == "iteration" and r["v_k"] is not None and _float(r["v_k"]) <= v_max:
            return r
    return None
