"""Problem definitions from structured config (YAML or JSON).

A problem config has the keys ``inputs`` (aleatory marginals, in ``x[i]``
order), ``nodes``, ``output``, ``decisions``, ``oracle`` and optional
``session`` and ``reference`` sections. See the README for the schema.
"""

from __future__ import annotations

import json
import math
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import yaml
from scipy.spatial import distance

from . import functions
from .acquisition import ContinuousFamily, FiniteFamily
from .gp import make_gp
from .model_graph import (
    Decision,
    Deterministic,
    Experiment,
    ModelGraph,
    NormalParam,
    SurrogateNode,
)
from .probspace import RandomVector


class ConfigError(ValueError):
    """Invalid config; ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


class OracleError(RuntimeError):
    pass


def load_config_text(text: str, suffix: str = ".yaml") -> dict:
    """Parse YAML (default) or JSON, reporting the error position."""
    try:
        if suffix == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        msg = getattr(exc, "problem", None) or str(exc)
        if mark is not None:
            raise ConfigError(f"invalid YAML: {msg}", mark.line + 1, mark.column + 1) from exc
        raise ConfigError(f"invalid YAML: {msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level", 1, 1)
    return data


def load_config(path: str | Path) -> dict:
    path = Path(path)
    return load_config_text(path.read_text(), path.suffix.lower())


def _rng(seed: int, k: int, label: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(k), zlib.crc32(label.encode())])


# -- oracles --------------------------------------------------------------


class Oracle:
    """Synthetic experiments: surrogate targets evaluate a registered function
    at the decision input; parameter targets return ``truth + noise``."""

    interactive = False

    def __init__(self, targets: Mapping[str, Mapping[str, Any]], seed: int = 0):
        self.targets = dict(targets)
        self.seed = int(seed)
        self._fns = {}
        for name, spec in self.targets.items():
            if "function" in spec:
                self._fns[name] = functions.lookup(spec["function"])
            elif "truth" not in spec:
                raise ConfigError(f"oracle for {name} needs 'function' or 'truth'")

    def __call__(self, decision: Decision, k: int) -> float:
        spec = self.targets.get(decision.target)
        if spec is None:
            raise OracleError(f"no oracle for target {decision.target!r}")
        if decision.target in self._fns:
            val = float(self._fns[decision.target](*decision.input))
        else:
            val = float(spec["truth"])
        if decision.noise_sd > 0:
            val += decision.noise_sd * float(_rng(self.seed, k, "oracle:" + decision.target).standard_normal())
        if not math.isfinite(val):
            raise OracleError(f"non-finite outcome for {decision.target} at {decision.input}")
        return val

    def truth_value(self, name: str):
        spec = self.targets[name]
        return self._fns.get(name), spec.get("truth")


class InteractiveOracle:
    """Asks for each outcome on the terminal."""

    interactive = True

    def __init__(self, input_fn: Callable[[str], str] = input, out=sys.stderr):
        self.input_fn = input_fn
        self.out = out

    def __call__(self, decision: Decision, k: int) -> float:
        where = "" if decision.input is None else " at input " + ", ".join(f"{v:.6g}" for v in decision.input)
        prompt = f"[k={k}] outcome of {decision.label} ({decision.target}{where}, noise sd {decision.noise_sd:g}): "
        for _ in range(5):
            try:
                text = self.input_fn(prompt)
            except EOFError as exc:
                raise OracleError("no outcome entered") from exc
            try:
                val = float(text)
            except ValueError:
                print(f"not a number: {text!r}", file=self.out)
                continue
            if math.isfinite(val):
                return val
            print("outcome must be finite", file=self.out)
        raise OracleError("too many invalid entries")


# -- problem --------------------------------------------------------------


@dataclass(eq=False)
class Problem:
    name: str
    config: dict
    graph0: ModelGraph
    families: list
    oracle: Any
    session: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    n_initial: int = 0

    def true_limit_state(self) -> Callable[[np.ndarray], np.ndarray]:
        """``g(x)`` with every epistemic node replaced by its oracle truth."""
        g = _truth_graph(self.graph0, self.oracle, use_truth=True)
        return lambda x: g.eval_xi_hat(x, np.zeros(0))


def _truth_graph(graph: ModelGraph, oracle, use_truth: bool) -> ModelGraph:
    nodes = []
    for nd in graph.nodes:
        if isinstance(nd, SurrogateNode):
            fn, _ = oracle.truth_value(nd.name)
            if fn is None:
                raise ConfigError(f"surrogate {nd.name} has no truth function")
            nodes.append(Deterministic(nd.name, nd.inputs, fn))
        elif isinstance(nd, NormalParam):
            val = nd.mean
            if use_truth:
                _, truth = oracle.truth_value(nd.name)
                val = float(truth)
            nodes.append(Deterministic(nd.name, (), lambda v=val: np.asarray(v)))
        else:
            nodes.append(nd)
    return ModelGraph(graph.rv, nodes, graph.output)


def _node(spec: Mapping[str, Any], index: int):
    try:
        kind = spec["type"]
        name = spec["name"]
        inputs = tuple(spec.get("inputs", ()))
        if kind == "deterministic":
            return Deterministic(name, inputs, functions.lookup(spec["function"]), spec["function"])
        if kind == "normal_param":
            return NormalParam(name, float(spec["mean"]), float(spec["sd"]))
        if kind == "surrogate":
            if "sigma_c" in spec:
                sigma_c = float(spec["sigma_c"])
            else:
                sigma_c = math.sqrt(float(spec["sigma_c2"]))
            ls = spec["lengthscales"]
            ls = [float(v) for v in (ls if isinstance(ls, list) else [ls] * len(inputs))]
            gp = make_gp(float(spec.get("prior_mean", 0.0)), sigma_c, ls, float(spec.get("noise_sd", 0.0)))
            return SurrogateNode(name, inputs, gp, spec.get("refit_min_obs"))
    except KeyError as exc:
        raise ConfigError(f"node #{index}: missing key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"node #{index}: {exc}") from exc
    raise ConfigError(f"node #{index}: unknown type {kind!r}")


def _families(specs) -> list:
    fams = []
    for i, spec in enumerate(specs):
        try:
            if spec["type"] == "continuous":
                fams.append(ContinuousFamily(spec.get("label", spec["target"]), spec["target"],
                                             float(spec.get("noise_sd", 0.0)), float(spec.get("cost", 1.0))))
            elif spec["type"] == "finite":
                label = spec.get("label", f"family{i}")
                decs = tuple(
                    Decision(d["target"], d.get("input"), float(d.get("noise_sd", 0.0)),
                             float(d.get("cost", 1.0)), d.get("family", label))
                    for d in spec["decisions"]
                )
                fams.append(FiniteFamily(label, decs))
            else:
                raise ConfigError(f"decision family #{i}: unknown type {spec['type']!r}")
        except KeyError as exc:
            raise ConfigError(f"decision family #{i}: missing key {exc.args[0]!r}") from exc
    if not fams:
        raise ConfigError("decision space is empty")
    return fams


def maximin_lhs(n: int, dim: int, rng: np.random.Generator, tries: int = 20) -> np.ndarray:
    """Latin hypercube in ``(0, 1)^dim`` with the largest minimum distance among ``tries``."""
    best, best_d = None, -1.0
    for _ in range(tries):
        cut = (np.argsort(rng.random((dim, n)), axis=1).T + rng.random((n, dim))) / n
        d = distance.pdist(cut).min() if n > 1 else 0.0
        if d > best_d:
            best, best_d = cut, d
    return best


def _initial_inputs(graph: ModelGraph, oracle, node: SurrogateNode, spec, seed: int) -> list:
    """Input points for initial observations of a surrogate."""
    from scipy import special

    out = []
    prior = _truth_graph(graph, oracle, use_truth=False)
    vals = prior.evaluate_nodes(graph.rv.means, np.zeros(0))
    for item in spec.get("initial", []):
        if isinstance(item, Mapping) and item.get("at") == "mean":
            out.append(tuple(float(np.asarray(a)) for a in prior.local_inputs(node.name, graph.rv.means, vals)))
        elif isinstance(item, Mapping) and "input" in item:
            out.append(tuple(float(v) for v in np.atleast_1d(item["input"])))
        else:
            out.append(tuple(float(v) for v in np.atleast_1d(item)))
    design = spec.get("initial_design")
    if design:
        if design.get("type") != "lhs":
            raise ConfigError(f"unknown initial design {design.get('type')!r}")
        size = int(design.get("size", 10))
        U = maximin_lhs(size, len(node.inputs), _rng(seed, 0, "lhs:" + node.name))
        cols = []
        for j, src in enumerate(node.inputs):
            if src.startswith("x["):
                cols.append(graph.rv.marginals[int(src[2:-1])].ppf(U[:, j]))
            else:
                p = graph.node(src)
                if not isinstance(p, NormalParam):
                    raise ConfigError(f"LHS design needs x or parameter inputs; {src} is neither")
                cols.append(p.mean + p.sd * special.ndtri(U[:, j]))
        out.extend(tuple(float(v) for v in row) for row in np.column_stack(cols))
    return out


def build_problem(cfg: Mapping[str, Any], seed: int = 0, interactive: bool = False,
                  input_fn: Callable[[str], str] | None = None) -> Problem:
    """Model, decision space and oracle from a config mapping.

    Initial surrogate observations are taken from the synthetic oracle
    (they are part of the starting model, not of the experiment history).
    """
    cfg = dict(cfg)
    for key in ("inputs", "nodes", "output", "decisions"):
        if key not in cfg:
            raise ConfigError(f"missing top-level key {key!r}")
    try:
        rv = RandomVector.from_list(cfg["inputs"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"inputs: {exc}") from exc
    nodes = [_node(s, i) for i, s in enumerate(cfg["nodes"])]
    try:
        graph = ModelGraph(rv, nodes, cfg["output"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    families = _families(cfg["decisions"])
    ocfg = cfg.get("oracle", {}) or {}
    synthetic = Oracle(ocfg.get("targets", {}), seed) if ocfg.get("targets") else None
    if interactive or ocfg.get("mode") == "interactive":
        oracle = InteractiveOracle(input_fn or input)
    elif synthetic is not None:
        oracle = synthetic
    else:
        raise ConfigError("oracle: no targets given and not interactive")
    n_init = 0
    for spec in cfg["nodes"]:
        if spec.get("type") != "surrogate" or not (spec.get("initial") or spec.get("initial_design")):
            continue
        if synthetic is None:
            raise ConfigError(f"initial observations of {spec['name']} need a synthetic oracle")
        node = graph.node(spec["name"])
        for i, z in enumerate(_initial_inputs(graph, synthetic, node, spec, seed)):
            d = Decision(node.name, z, node.gp.noise_sd, 1.0, "initial")
            y = synthetic(d, 0)
            nd = graph.node(node.name)
            graph = graph.with_node(type(nd)(nd.name, nd.inputs, nd.gp.condition(np.array(z), y), nd.refit_min_obs))
            n_init += 1
    return Problem(cfg.get("name", "custom"), cfg, graph, families, oracle,
                   dict(cfg.get("session", {}) or {}), dict(cfg.get("reference", {}) or {}), n_init)
