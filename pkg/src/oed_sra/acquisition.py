"""Myopic acquisition functions and their optimization.

For a decision ``d`` the outcome model ``delta_hat(d, e)`` is propagated
through its own sigma points ``e^delta_m``; every scenario outcome gives an
updated model whose residual uncertainty is estimated with the current
samples and pruning. The expected residual is the ``v^delta``-weighted sum
over scenarios.

Scenario updates are computed without refactorizing the GP: conditioning a
GP on one point changes the posterior by a rank-one term, so for a fixed set
of query points ``Z`` only ``c(Z, z_d) - V_Z^T v_d`` is needed per decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .estimators import gamma_hat, h_bar1, split_scale, ut_variance
from .model_graph import Decision, Experiment, ModelGraph, NormalParam, SurrogateNode
from .sampling import Pruning, SampleSet, prune
from .unscented import SigmaPointSet, merwe_sigma_points

CRITERIA = ("h1", "h2", "h3")
# conditioning on a point with smaller predictive variance carries no information
MIN_INFO_VAR = 1e-10


class ScenarioError(RuntimeError):
    pass


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AcquisitionSpec:
    """Criterion ``h1|h2|h3``; ``normalization`` is ``none`` (``lambda * E[H]``)
    or ``relative`` (``c * E[H] / H``)."""

    criterion: str = "h3"
    normalization: str = "none"
    n_starts: int = 64
    n_refine: int = 4
    halvings: int = 20
    step_frac: float = 0.1

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}, got {self.criterion!r}")
        if self.normalization not in ("none", "relative"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class ContinuousFamily:
    """Evaluate surrogate ``target`` at any input (optimized over)."""

    label: str
    target: str
    noise_sd: float = 0.0
    cost: float = 1.0

    def make(self, z) -> Decision:
        return Decision(self.target, tuple(np.atleast_1d(z)), self.noise_sd, self.cost, self.label)


@dataclass(frozen=True)
class FiniteFamily:
    """A fixed list of decisions (evaluated exhaustively)."""

    label: str
    decisions: tuple[Decision, ...]


DecisionFamily = ContinuousFamily | FiniteFamily


# -- scenarios (reference path) ----------------------------------------


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    decision: Decision
    outcomes: np.ndarray
    updated_graphs: list
    delta_weights: np.ndarray


DELTA_SIGMA = merwe_sigma_points(2)


def build_scenarios(graph: ModelGraph, decision: Decision,
                    sigma_points: SigmaPointSet = DELTA_SIGMA) -> ScenarioSet:
    """Model updates for each sigma point of ``(target coordinate, noise coordinate)``."""
    outcomes, graphs = [], []
    for m, e in enumerate(sigma_points.points):
        try:
            o = graph.predictive_outcome(decision, e)
            graphs.append(graph.update(Experiment(decision, o), refit=False))
        except Exception as exc:  # noqa: BLE001
            raise ScenarioError(f"scenario {m} failed: {exc}") from exc
        outcomes.append(o)
    return ScenarioSet(decision, np.array(outcomes), graphs, sigma_points.wm)


def _reduce(ctx: "AcquisitionContext", xi: np.ndarray, criterion: str) -> np.ndarray:
    """Per-scenario residual for ``xi`` of shape ``(..., M, n)``."""
    sp = ctx.sigma_points
    w = ctx.w_kept
    if criterion == "h1":
        alphas = ctx.h1bar + ctx.scale * ((xi <= 0) @ w)
        _, h1 = ut_variance(sp, alphas)
        return np.maximum(h1, 0.0)
    mu, var = ut_variance(sp, np.moveaxis(xi, -2, -1))
    var = np.maximum(var, 0.0)
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(sd > 0, mu / np.where(sd > 0, sd, 1.0), np.where(mu > 0, np.inf, -np.inf))
    g = gamma_hat(eta)
    if criterion == "h2":
        return ctx.scale * (g @ w)
    return (ctx.scale * (np.sqrt(g) @ w)) ** 2


def expected_residual_reference(ctx: "AcquisitionContext", decision: Decision, criterion: str) -> float:
    """Expected residual from fully updated scenario graphs (slow, for checking)."""
    sc = build_scenarios(ctx.graph, decision)
    vals = []
    for g in sc.updated_graphs:
        xi = g.eval_xi_hat(ctx.x_kept, ctx.sigma_points.points[:, None, :])
        vals.append(float(_reduce(ctx, xi, criterion)))
    return float(np.dot(sc.delta_weights, vals))


# -- fast path ---------------------------------------------------------


@dataclass(eq=False)
class _TargetCache:
    shape: tuple
    Zf: np.ndarray | None = None
    mean: np.ndarray | None = None
    var: np.ndarray | None = None
    V: np.ndarray | None = None


@dataclass(eq=False)
class AcquisitionContext:
    """Everything shared by the decisions evaluated at one iteration.

    The samples, pruning, ``h1_bar`` and node values on ``I_tau^n`` are
    fixed here, so every decision is scored on identical ingredients.
    """

    graph: ModelGraph
    samples: SampleSet
    pruning: Pruning
    n: int
    sigma_points: SigmaPointSet
    delta_points: SigmaPointSet = DELTA_SIGMA
    idx: np.ndarray = field(init=False)
    scale: float = field(init=False)
    h1bar: float = field(init=False)
    x_kept: np.ndarray = field(init=False)
    w_kept: np.ndarray = field(init=False)
    values: dict = field(init=False)
    current: dict = field(init=False)
    n_updates: int = field(init=False, default=0)
    n_evals: int = field(init=False, default=0)
    _targets: dict = field(init=False, default_factory=dict)

    def __post_init__(self):
        self.idx, self.scale = split_scale(self.pruning, self.n)
        self.h1bar = h_bar1(self.samples, self.pruning)
        self.x_kept = self.samples.x[self.idx]
        self.w_kept = self.samples.w[self.idx]
        E = self.sigma_points.points[:, None, :]
        self.values = self.graph.evaluate_nodes(self.x_kept, E)
        xi = np.broadcast_to(self.values[self.graph.output], (len(self.sigma_points), len(self.idx)))
        self.current = {c: float(_reduce(self, xi, c)) for c in CRITERIA}

    @classmethod
    def build(cls, graph, samples, tau_or_pruning, n, sigma_points):
        pr = tau_or_pruning if isinstance(tau_or_pruning, Pruning) else prune(samples, tau_or_pruning)
        return cls(graph, samples, pr, n, sigma_points)

    def _target(self, name: str) -> _TargetCache:
        if name in self._targets:
            return self._targets[name]
        node = self.graph.node(name)
        if isinstance(node, NormalParam):
            tc = _TargetCache(())
        else:
            Z = np.broadcast_arrays(*self.graph.local_inputs(name, self.x_kept, self.values))
            shape = Z[0].shape
            Zf = np.stack([a.reshape(-1) for a in Z], axis=-1)
            mean, var = node.gp.mean_var(Zf)
            V = node.gp.whitened_cross(Zf) if node.gp.n_obs else np.zeros((0, len(Zf)))
            tc = _TargetCache(shape, Zf, mean, var, V)
        self._targets[name] = tc
        return tc

    def target_values(self, decisions: Sequence[Decision]) -> np.ndarray:
        """Updated target-node values, shape ``(B, M_delta, M, n)`` (broadcastable)."""
        name = decisions[0].target
        node = self.graph.node(name)
        ecol = self.sigma_points.points[:, self.graph.e_coordinate(name)][:, None]
        e1 = self.delta_points.points[:, 0]
        e2 = self.delta_points.points[:, 1]
        noise = np.array([d.noise_sd for d in decisions])
        if isinstance(node, NormalParam):
            mu0, sd0 = node.mean, node.sd
            if sd0 == 0:
                mean = np.full((len(decisions), len(e1)), mu0)
                sd = np.zeros((len(decisions), 1))
            else:
                o = mu0 + e1[None, :] * sd0 + e2[None, :] * noise[:, None]
                p0 = sd0**-2
                with np.errstate(divide="ignore"):
                    pn = np.where(noise > 0, noise**-2.0, np.inf)
                var1 = np.where(np.isinf(pn), 0.0, 1.0 / (p0 + pn))
                mean = np.where(np.isinf(pn)[:, None], o,
                                var1[:, None] * (mu0 * p0 + o * np.where(np.isinf(pn), 0.0, pn)[:, None]))
                sd = np.sqrt(var1)[:, None]
            return (mean[:, :, None, None] + ecol[None, None] * sd[:, :, None, None])
        tc = self._target(name)
        gp = node.gp
        D = np.array([d.input for d in decisions], dtype=float)
        mean_d, var_d = gp.mean_var(D)
        Vd = gp.whitened_cross(D) if gp.n_obs else np.zeros((0, len(D)))
        kk = gp.kernel(tc.Zf, D) - tc.V.T @ Vd  # (P, B)
        denom = var_d + noise**2
        informative = denom > MIN_INFO_VAR * gp.kernel.sigma_c**2
        inv = np.where(informative, 1.0 / np.where(informative, denom, 1.0), 0.0)
        # (o_m - m_d) / denom for each decision and scenario
        a = (e1[None, :] * np.sqrt(var_d)[:, None] + e2[None, :] * noise[:, None]) * inv[:, None]
        mean_new = tc.mean[None, None, :] + a[:, :, None] * kk.T[:, None, :]
        var_new = np.maximum(tc.var[None, :] - kk.T**2 * inv[:, None], 0.0)
        B, Md = a.shape
        mean_new = mean_new.reshape((B, Md) + tc.shape)
        sd_new = np.sqrt(var_new).reshape((B, 1) + tc.shape)
        if len(tc.shape) == 1:
            mean_new = mean_new[:, :, None, :]
            sd_new = sd_new[:, :, None, :]
        return mean_new + ecol * sd_new

    def scenario_xi(self, decisions: Sequence[Decision]) -> np.ndarray:
        """Finite-dimensional model after each scenario, shape ``(B, M_delta, M, n)``."""
        name = decisions[0].target
        if any(d.target != name for d in decisions):
            raise ValueError("decisions in one batch must share the target node")
        for d in decisions:
            self.graph.check_decision(d)
        new = self.target_values(decisions)
        shape = new.shape[:2] + (len(self.sigma_points), len(self.idx))
        self.n_updates += shape[0] * shape[1]
        self.n_evals += int(np.prod(shape))
        if name == self.graph.output:
            return np.broadcast_to(new, shape)
        desc = self.graph.descendants(name)
        given = {k: v for k, v in self.values.items() if k not in desc}
        given[name] = new
        vals = self.graph.evaluate_nodes(self.x_kept, self.sigma_points.points[:, None, :], given=given)
        return np.broadcast_to(vals[self.graph.output], shape)

    def expected(self, decisions: Sequence[Decision], criterion: str, chunk_elems: int = 4_000_000) -> np.ndarray:
        """``E_{k,d}[H_{k+1}]`` for a batch of decisions on one target."""
        out = []
        per = max(1, chunk_elems // max(1, len(self.delta_points) * len(self.sigma_points) * len(self.idx)))
        for s in range(0, len(decisions), per):
            xi = self.scenario_xi(decisions[s : s + per])
            h = _reduce(self, xi, criterion)
            out.append(h @ self.delta_points.wm)
        return np.concatenate(out) if out else np.zeros(0)

    def score(self, decisions: Sequence[Decision], spec: AcquisitionSpec) -> np.ndarray:
        """Acquisition values; cost folded in per ``spec.normalization``."""
        eh = self.expected(decisions, spec.criterion)
        cost = np.array([d.cost for d in decisions])
        if spec.normalization == "relative":
            cur = self.current[spec.criterion]
            return cost * eh / cur if cur > 0 else cost * eh
        return cost * eh

    # -- input geometry ------------------------------------------------
    def input_geometry(self, name: str):
        """Candidate pool, scale and box for the local inputs of node ``name``.

        Inputs are taken at every sigma point, so inputs that are themselves
        epistemic (an uncertain parameter feeding a surrogate) vary over
        their current uncertainty instead of sitting at the mean. The pool
        holds the kept samples; scale and box come from all samples.
        """
        E = self.sigma_points.points[:, None, :]
        vals = self.graph.evaluate_nodes(self.samples.x, E, upto=name)
        shape = (len(self.sigma_points), len(self.samples.x))
        Z = np.stack([np.broadcast_to(a, shape) for a in self.graph.local_inputs(name, self.samples.x, vals)], axis=-1)
        w = np.broadcast_to(self.samples.w / self.samples.w.sum() / shape[0], shape).reshape(-1)
        flat = Z.reshape(-1, Z.shape[-1])
        mean = w @ flat
        sd = np.sqrt(np.maximum(w @ (flat - mean) ** 2, 0.0))
        sd = np.where(sd > 0, sd, np.maximum(np.abs(mean), 1.0) * 1e-3)
        lo, hi = flat.min(axis=0), flat.max(axis=0)
        pool = Z[:, self.idx].reshape(-1, Z.shape[-1]) if len(self.idx) else flat
        return pool, sd, lo, hi


def expected_residual(graph: ModelGraph, decision: Decision, samples: SampleSet, tau, n: int,
                      criterion: str, sigma_points: SigmaPointSet) -> float:
    """Expected residual uncertainty after ``decision`` (one-off convenience)."""
    ctx = AcquisitionContext.build(graph, samples, tau, n, sigma_points)
    return float(ctx.expected([decision], criterion)[0])


@dataclass
class FamilyTrace:
    label: str
    best_score: float
    best: Decision
    n_evaluated: int


def _coordinate_descent(ctx: AcquisitionContext, fam: ContinuousFamily, starts: np.ndarray,
                        scores: np.ndarray, step: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                        spec: AcquisitionSpec):
    """Shrinking-step coordinate search from several starts at once."""
    Z = starts.copy()
    S = scores.copy()
    steps = np.repeat(step[None, :], len(Z), axis=0)
    n_halved = np.zeros(len(Z), int)
    dim = Z.shape[1]
    count = 0
    for _ in range(4 * spec.halvings + 40):
        live = np.flatnonzero(n_halved < spec.halvings)
        if live.size == 0:
            break
        cand = np.repeat(Z[live, None, :], 2 * dim, axis=1)
        ar = np.arange(dim)
        cand[:, ar, ar] += steps[live]
        cand[:, dim + ar, ar] -= steps[live]
        cand = np.clip(cand, lo, hi)
        flat = cand.reshape(-1, dim)
        sc = ctx.score([fam.make(z) for z in flat], spec).reshape(live.size, 2 * dim)
        count += len(flat)
        best = np.argmin(sc, axis=1)
        bval = sc[np.arange(live.size), best]
        for r, i in enumerate(live):
            if bval[r] < S[i]:
                Z[i], S[i] = cand[r, best[r]], bval[r]
            else:
                steps[i] *= 0.5
                n_halved[i] += 1
    return Z, S, count


def optimize_decision(ctx: AcquisitionContext, families: Sequence[DecisionFamily], spec: AcquisitionSpec,
                      rng: np.random.Generator, anchors: np.ndarray | None = None):
    """Minimize the acquisition over a union of decision families.

    Continuous families: score ``n_starts`` seeded candidates (local inputs
    of the target at pruned samples, plus ``anchors`` such as design points
    given in x-space), then refine the best ``n_refine`` by coordinate
    descent. Finite families are scored exhaustively.

    Returns ``(best decision, score, traces)``.
    """
    if not families:
        raise OptimizationError("decision space is empty")
    traces: list[FamilyTrace] = []
    for fam in families:
        if isinstance(fam, FiniteFamily):
            decs = list(fam.decisions)
            by_target: dict[str, list[int]] = {}
            for i, d in enumerate(decs):
                by_target.setdefault(d.target, []).append(i)
            sc = np.full(len(decs), np.nan)
            for ids in by_target.values():
                sc[ids] = ctx.score([decs[i] for i in ids], spec)
            if not np.isfinite(sc).any():
                continue
            b = int(np.nanargmin(np.where(np.isfinite(sc), sc, np.nan)))
            traces.append(FamilyTrace(fam.label, float(sc[b]), decs[b], len(decs)))
            continue
        kept_pool, sd, lo, hi = ctx.input_geometry(fam.target)
        cands = []
        if anchors is not None and len(anchors):
            vals = ctx.graph.evaluate_nodes(anchors, np.zeros(ctx.graph.epistemic_dim))
            A = np.stack(np.broadcast_arrays(*ctx.graph.local_inputs(fam.target, anchors, vals)), axis=-1)
            cands.extend(np.clip(A.reshape(-1, A.shape[-1]), lo, hi)[: spec.n_starts // 4])
        n_rand = max(spec.n_starts - len(cands), 1)
        pick = rng.choice(len(kept_pool), size=min(n_rand, len(kept_pool)), replace=False)
        cands.extend(kept_pool[np.sort(pick)])
        starts = np.array(cands)
        sc = ctx.score([fam.make(z) for z in starts], spec)
        ok = np.isfinite(sc)
        if not ok.any():
            continue
        order = np.argsort(np.where(ok, sc, np.inf), kind="stable")[: spec.n_refine]
        Z, S, count = _coordinate_descent(ctx, fam, starts[order], sc[order], spec.step_frac * sd, lo, hi, spec)
        b = int(np.argmin(S))
        traces.append(FamilyTrace(fam.label, float(S[b]), fam.make(Z[b]), len(starts) + count))
    if not traces:
        raise OptimizationError("all acquisition evaluations were non-finite")
    best = min(traces, key=lambda t: t.best_score)
    return best.best, best.best_score, traces
