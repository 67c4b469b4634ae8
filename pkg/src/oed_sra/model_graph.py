"""Hierarchical performance functions with epistemic nodes.

A :class:`ModelGraph` is a DAG over the aleatory inputs ``x[0] .. x[m-1]``
and named nodes. Each epistemic node (a GP surrogate or an unknown normal
parameter) owns one standard-normal coordinate of ``E``; its finite
dimensional value is ``mean + e_j * sd`` where mean and sd are the node's
posterior moments at its local input.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .gp import GpSurrogate
from .probspace import RandomVector

_X_REF = re.compile(r"^x\[(\d+)\]$")


class GraphError(ValueError):
    pass


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Deterministic:
    """Known function of its inputs; ``fn`` must broadcast over numpy arrays."""

    name: str
    inputs: tuple[str, ...]
    fn: Callable[..., Any]
    fn_name: str = ""


@dataclass(frozen=True)
class SurrogateNode:
    """Scalar GP surrogate; its input vector is the stacked values of ``inputs``."""

    name: str
    inputs: tuple[str, ...]
    gp: GpSurrogate
    refit_min_obs: int | None = None

    epistemic = True


@dataclass(frozen=True)
class NormalParam:
    """Unknown scalar with a normal belief; ``sd == 0`` means it is known."""

    name: str
    mean: float
    sd: float
    inputs: tuple[str, ...] = ()

    epistemic = True

    def __post_init__(self):
        if self.sd < 0:
            raise GraphError(f"parameter {self.name}: sd must be nonnegative")


Node = Deterministic | SurrogateNode | NormalParam


@dataclass(frozen=True)
class Decision:
    """An experiment that can be run on epistemic node ``target``.

    ``input`` is the GP input for surrogate targets and ``None`` for
    parameter observations. ``family`` groups decisions for reporting and
    for per-family optimization.
    """

    target: str
    input: tuple[float, ...] | None = None
    noise_sd: float = 0.0
    cost: float = 1.0
    family: str = ""

    def __post_init__(self):
        if self.input is not None:
            object.__setattr__(self, "input", tuple(float(v) for v in np.atleast_1d(self.input)))
        if self.noise_sd < 0:
            raise GraphError("decision noise_sd must be nonnegative")
        if not self.cost > 0:
            raise GraphError("decision cost must be positive")

    @property
    def label(self) -> str:
        return self.family or self.target

    def to_dict(self) -> dict[str, Any]:
        return {
            "target": self.target,
            "input": None if self.input is None else list(self.input),
            "noise_sd": self.noise_sd,
            "cost": self.cost,
            "family": self.family,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Decision":
        return cls(d["target"], d.get("input"), float(d.get("noise_sd", 0.0)),
                   float(d.get("cost", 1.0)), d.get("family", ""))


@dataclass(frozen=True)
class Experiment:
    decision: Decision
    outcome: float

    def __post_init__(self):
        if not math.isfinite(self.outcome):
            raise GraphError("experiment outcome must be finite")

    def to_dict(self) -> dict[str, Any]:
        return {"decision": self.decision.to_dict(), "outcome": self.outcome}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Experiment":
        return cls(Decision.from_dict(d["decision"]), float(d["outcome"]))


def _topological(nodes: Sequence[Node], m: int) -> list[Node]:
    by_name = {}
    for nd in nodes:
        if _X_REF.match(nd.name) or nd.name in by_name:
            raise GraphError(f"invalid or duplicate node name {nd.name!r}")
        by_name[nd.name] = nd
    order: list[Node] = []
    state: dict[str, int] = {}

    def visit(name, stack):
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise GraphError(f"cycle through {' -> '.join(stack + [name])}")
        state[name] = 1
        for src in by_name[name].inputs:
            mx = _X_REF.match(src)
            if mx:
                if int(mx.group(1)) >= m:
                    raise GraphError(f"node {name} references {src} but dim X = {m}")
            elif src in by_name:
                visit(src, stack + [name])
            else:
                raise GraphError(f"node {name} references unknown input {src!r}")
        state[name] = 2
        order.append(by_name[name])

    for nd in nodes:
        visit(nd.name, [])
    return order


@dataclass(frozen=True, eq=False)
class ModelGraph:
    """Immutable hierarchical model ``xi_hat(x, e)``.

    Parameters
    ----------
    rv : RandomVector
        Law of the aleatory inputs ``x``.
    nodes : sequence of node objects
        Any order; they are sorted topologically.
    output : str
        Name of the scalar performance node ``g``.
    history : tuple of Experiment
        Experiments applied since construction.
    """

    rv: RandomVector
    nodes: tuple[Node, ...]
    output: str
    history: tuple[Experiment, ...] = ()
    _index: dict = field(default=None, init=False, repr=False)
    _e_index: dict = field(default=None, init=False, repr=False)
    _e_dependent: frozenset = field(default=None, init=False, repr=False)

    def __post_init__(self):
        order = tuple(_topological(self.nodes, self.rv.dim))
        object.__setattr__(self, "nodes", order)
        index = {nd.name: nd for nd in order}
        if self.output not in index:
            raise GraphError(f"output node {self.output!r} not in graph")
        for nd in order:
            if isinstance(nd, SurrogateNode) and len(nd.inputs) != nd.gp.dim:
                raise GraphError(
                    f"surrogate {nd.name}: {len(nd.inputs)} inputs but GP dimension {nd.gp.dim}"
                )
        e_index = {}
        dependent = set()
        for nd in order:
            if getattr(nd, "epistemic", False):
                e_index[nd.name] = len(e_index)
                dependent.add(nd.name)
            elif any(src in dependent for src in nd.inputs):
                dependent.add(nd.name)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_e_index", e_index)
        object.__setattr__(self, "_e_dependent", frozenset(dependent))

    # -- structure -------------------------------------------------------
    @property
    def epistemic_dim(self) -> int:
        return len(self._e_index)

    @property
    def epistemic_nodes(self) -> list[str]:
        return list(self._e_index)

    def node(self, name: str) -> Node:
        try:
            return self._index[name]
        except KeyError:
            raise GraphError(f"no node named {name!r}") from None

    def e_coordinate(self, name: str) -> int:
        return self._e_index[name]

    def descendants(self, name: str) -> set[str]:
        out = {name}
        for nd in self.nodes:
            if any(src in out for src in nd.inputs):
                out.add(nd.name)
        out.discard(name)
        return out

    def depends_on_e(self, name: str) -> bool:
        return name in self._e_dependent

    # -- evaluation ------------------------------------------------------
    def node_moments(self, node: Node, inputs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of an epistemic node at stacked local inputs."""
        if isinstance(node, NormalParam):
            return np.asarray(node.mean, dtype=float), np.asarray(node.sd**2, dtype=float)
        arrays = np.broadcast_arrays(*inputs)
        shape = arrays[0].shape
        Z = np.stack([a.reshape(-1) for a in arrays], axis=-1)
        mean, var = node.gp.mean_var(Z)
        return mean.reshape(shape), var.reshape(shape)

    def evaluate_nodes(self, x, e, given: Mapping[str, np.ndarray] | None = None,
                       upto: str | None = None) -> dict[str, np.ndarray]:
        """Values of every node at ``(x, e)`` with numpy broadcasting.

        ``x[..., i]`` feeds ``x[i]`` and ``e[..., j]`` the j-th epistemic
        coordinate. Nodes present in ``given`` are taken as is.
        """
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        vals: dict[str, np.ndarray] = {}
        given = given or {}

        def src(name):
            mx = _X_REF.match(name)
            return x[..., int(mx.group(1))] if mx else vals[name]

        for nd in self.nodes:
            if nd.name in given:
                vals[nd.name] = given[nd.name]
            else:
                args = [src(s) for s in nd.inputs]
                if isinstance(nd, Deterministic):
                    with np.errstate(all="ignore"):
                        out = np.asarray(nd.fn(*args), dtype=float)
                    if np.isnan(out).any() and not any(np.isnan(a).any() for a in args):
                        raise EvaluationError(f"node {nd.name} produced NaN")
                else:
                    mean, var = self.node_moments(nd, args)
                    out = mean + e[..., self._e_index[nd.name]] * np.sqrt(var)
                vals[nd.name] = out
            if nd.name == upto:
                break
        return vals

    def local_inputs(self, name: str, x, vals: Mapping[str, np.ndarray]) -> list[np.ndarray]:
        """Input arrays of node ``name`` given ``x`` and already computed node values."""
        x = np.asarray(x, dtype=float)
        out = []
        for s in self.node(name).inputs:
            mx = _X_REF.match(s)
            out.append(x[..., int(mx.group(1))] if mx else np.asarray(vals[s]))
        return out

    def eval_xi_hat(self, x, e) -> np.ndarray:
        """Finite-dimensional performance function ``xi_hat(x, e)``."""
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        if x.shape[-1] != self.rv.dim:
            raise GraphError(f"x must have trailing dimension {self.rv.dim}")
        if self.epistemic_dim and e.shape[-1] != self.epistemic_dim:
            raise GraphError(f"e must have trailing dimension {self.epistemic_dim}")
        out = self.evaluate_nodes(x, e)[self.output]
        shape = np.broadcast_shapes(x.shape[:-1], e.shape[:-1])
        return np.broadcast_to(out, shape)

    # -- decisions -------------------------------------------------------
    def check_decision(self, d: Decision) -> Node:
        node = self.node(d.target)
        if isinstance(node, SurrogateNode):
            if d.input is None or len(d.input) != node.gp.dim:
                raise GraphError(f"decision on {d.target} needs an input of dimension {node.gp.dim}")
        elif isinstance(node, NormalParam):
            if d.input is not None:
                raise GraphError(f"decision on parameter {d.target} takes no input")
        else:
            raise GraphError(f"node {d.target} is not epistemic")
        return node

    def target_moments(self, d: Decision) -> tuple[float, float]:
        """Posterior mean and sd of the decision's target at its input."""
        node = self.check_decision(d)
        if isinstance(node, NormalParam):
            return float(node.mean), float(node.sd)
        mean, var = node.gp.mean_var(np.asarray(d.input)[None, :])
        return float(mean[0]), math.sqrt(float(var[0]))

    def predictive_outcome(self, d: Decision, e) -> float:
        """``delta_hat(d, e)`` with ``e = (target coordinate, noise coordinate)``."""
        e = np.asarray(e, dtype=float).reshape(-1)
        if e.shape != (2,):
            raise GraphError("predictive outcome takes (target, noise) coordinates")
        mean, sd = self.target_moments(d)
        out = mean + e[0] * sd + e[1] * d.noise_sd
        if not math.isfinite(out):
            raise EvaluationError(f"non-finite predictive outcome for {d.target}")
        return out

    def update(self, experiment: Experiment, refit: bool = False) -> "ModelGraph":
        """Graph conditioned on one experiment; ``refit`` re-estimates GP hyperparameters."""
        d = experiment.decision
        node = self.check_decision(d)
        o = float(experiment.outcome)
        if isinstance(node, SurrogateNode):
            gp = node.gp.condition(np.asarray(d.input), o, d.noise_sd)
            if refit and node.refit_min_obs is not None:
                gp = gp.refit_hyperparameters(node.refit_min_obs)
            new = replace(node, gp=gp)
        else:
            new = replace(node, **dict(zip(("mean", "sd"), conjugate_normal(node.mean, node.sd, o, d.noise_sd))))
        return self.with_node(new, history=self.history + (experiment,))

    def with_node(self, new: Node, history: tuple | None = None) -> "ModelGraph":
        nodes = tuple(new if nd.name == new.name else nd for nd in self.nodes)
        return replace(self, nodes=nodes, history=self.history if history is None else history)

    # -- persistence -----------------------------------------------------
    def state_dict(self) -> dict[str, Any]:
        state = {}
        for nd in self.nodes:
            if isinstance(nd, SurrogateNode):
                state[nd.name] = {"gp": nd.gp.to_dict()}
            elif isinstance(nd, NormalParam):
                state[nd.name] = {"mean": nd.mean, "sd": nd.sd}
        return {"nodes": state, "history": [ex.to_dict() for ex in self.history]}

    def load_state(self, state: Mapping[str, Any]) -> "ModelGraph":
        """Copy of this graph (same structure) carrying the node states in ``state``."""
        g = self
        for name, st in state["nodes"].items():
            nd = g.node(name)
            if isinstance(nd, SurrogateNode):
                g = g.with_node(replace(nd, gp=GpSurrogate.from_dict(st["gp"])))
            else:
                g = g.with_node(replace(nd, mean=float(st["mean"]), sd=float(st["sd"])))
        return replace(g, history=tuple(Experiment.from_dict(h) for h in state.get("history", [])))


def conjugate_normal(mu0: float, sd0: float, obs: float, noise_sd: float) -> tuple[float, float]:
    """Posterior of a normal mean after one observation with known noise."""
    if sd0 == 0:
        return float(mu0), 0.0
    if noise_sd == 0:
        return float(obs), 0.0
    p0, pn = sd0**-2, noise_sd**-2
    var1 = 1.0 / (p0 + pn)
    return var1 * (mu0 * p0 + obs * pn), math.sqrt(var1)
