"""The four benchmark problems as configs, plus their expected-results manifests.

Each case is a plain config mapping (the same schema the CLI reads from
disk), so ``oed-sra run --case NAME`` and ``oed-sra run --config FILE``
share one code path. :func:`export_config` writes a case to YAML.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml
from scipy.stats import norm

from .config import Problem, build_problem

_EX1 = {
    "name": "example1",
    "inputs": [{"kind": "normal", "mean": -0.5, "sd": 0.2}],
    "nodes": [
        {
            "name": "g",
            "type": "surrogate",
            "inputs": ["x[0]"],
            "prior_mean": -0.5,
            "sigma_c2": 0.1,
            "lengthscales": [0.5],
            "initial": [{"at": "mean"}],
        }
    ],
    "output": "g",
    "decisions": [{"label": "g", "type": "continuous", "target": "g", "cost": 1.0}],
    "oracle": {"targets": {"g": {"function": "bimodal_1d"}}},
    "session": {"criterion": "h1", "v_max": 0.05, "k_max": 30},
    "reference": {"alpha": 0.0234},
}

_MU2 = [350.0, 50.8, 3.81, 173.0, 9.38, 33.1, 0.036]

_EX2 = {
    "name": "example2",
    "inputs": [{"kind": "normal", "mean": m, "cov": 0.1} for m in _MU2],
    "nodes": [
        {"name": "y1", "type": "deterministic", "inputs": ["x[0]", "x[1]", "x[2]"], "function": "rp38.y1"},
        {
            "name": "y2",
            "type": "surrogate",
            "inputs": ["x[3]"],
            "prior_mean": 1.0,
            "sigma_c2": 0.03,
            "lengthscales": [20.0],
            "refit_min_obs": 2,
            "initial": [{"at": "mean"}],
        },
        {"name": "y3", "type": "deterministic", "inputs": ["x[3]", "x[4]", "x[5]", "x[6]"], "function": "rp38.y3"},
        {"name": "y4", "type": "deterministic", "inputs": ["x[3]", "x[4]", "x[5]", "x[6]"], "function": "rp38.y4"},
        {
            "name": "z1",
            "type": "surrogate",
            "inputs": ["y1", "y2"],
            "prior_mean": 5.0,
            "sigma_c2": 2.0,
            "lengthscales": [0.5, 0.5],
            "refit_min_obs": 5,
            "initial": [{"at": "mean"}],
        },
        {"name": "g", "type": "deterministic", "inputs": ["z1", "y1", "y3", "y4"], "function": "rp38.g"},
    ],
    "output": "g",
    "decisions": [
        {"label": "y2", "type": "continuous", "target": "y2", "cost": 1.0},
        {"label": "z1", "type": "continuous", "target": "z1", "cost": 1.0},
    ],
    "oracle": {"targets": {"y2": {"function": "rp38.y2"}, "z1": {"function": "rp38.z1"}}},
    "session": {"criterion": "h3", "v_max": 0.05, "k_max": 40},
    "reference": {"alpha": 8.1e-3},
}

_EX3 = {
    "name": "example3",
    "inputs": [{"kind": "normal", "mean": 0.0, "sd": 1.0}, {"kind": "normal", "mean": 0.0, "sd": 1.0}],
    "nodes": [
        {
            "name": "g",
            "type": "surrogate",
            "inputs": ["x[0]", "x[1]"],
            "prior_mean": -1.0,
            "sigma_c": 1.0,
            "lengthscales": [3.0, 3.0],
            "initial": [{"input": [0.0, 0.0]}],
        }
    ],
    "output": "g",
    "decisions": [{"label": "g", "type": "continuous", "target": "g", "cost": 1.0}],
    "oracle": {"targets": {"g": {"function": "four_branch"}}},
    "session": {"criterion": "h3", "v_max": 0.025, "k_max": 120},
    "reference": {"alpha": 4.416e-3},
}

# Unit length scale = width of the +-b prior box of each input (t, s, d/t, l),
# b = Phi^-1(1 - 1e-3), i.e. the inputs are read on a unit hypercube.
_B4 = float(norm.ppf(1.0 - 1e-3))
_EX4_LS = [2 * _B4 * sd for sd in (0.6, 32.7, 0.15, math.sqrt(1.49))]

_EX4 = {
    "name": "example4",
    "inputs": [
        {"kind": "normal", "mean": 20.0, "cov": 0.03},
        {"kind": "normal", "mean": 545.0, "cov": 0.06},
        {"kind": "normal", "mean": 200.0, "var": 1.49},
        {"kind": "gumbel", "mean": 15.75, "sd": 0.4725},
        {"kind": "normal", "mean": 0.0, "sd": 1.0},
    ],
    "nodes": [
        {"name": "d_t", "type": "normal_param", "mean": 0.5, "sd": 0.15},
        {"name": "mu_m", "type": "normal_param", "mean": 1.0, "sd": 0.1},
        {
            "name": "p_fe",
            "type": "surrogate",
            "inputs": ["x[0]", "x[1]", "d_t", "x[2]"],
            "prior_mean": -10.0,
            "sigma_c": 10.0,
            "lengthscales": _EX4_LS,
            "initial": [{"at": "mean"}],
        },
        {"name": "x_m", "type": "deterministic", "inputs": ["mu_m", "x[4]"], "function": "pipe.x_m"},
        {"name": "g", "type": "deterministic", "inputs": ["x_m", "p_fe", "x[3]"], "function": "pipe.g"},
    ],
    "output": "g",
    "decisions": [
        {"label": "p_fe", "type": "continuous", "target": "p_fe", "cost": 1.0},
        {"label": "x_m", "type": "finite", "decisions": [{"target": "mu_m", "noise_sd": 0.1, "cost": 1.1}]},
        {
            "label": "d_t",
            "type": "finite",
            "decisions": [
                {"target": "d_t", "noise_sd": 0.08, "cost": 1.11},
                {"target": "d_t", "noise_sd": 0.04, "cost": 1.12},
                {"target": "d_t", "noise_sd": 0.02, "cost": 1.13},
            ],
        },
    ],
    "oracle": {
        "targets": {"p_fe": {"function": "pipe.p_fe"}, "mu_m": {"truth": 1.0}, "d_t": {"truth": 0.3}}
    },
    "session": {
        "criterion": "h3",
        "normalization": "relative",
        "stopping": "either",
        "alpha_target": 1e-3,
        "z": 4.0,
        "v_max": 0.05,
        "k_max": 100,
    },
    "reference": {"alpha_target": 1e-3},
}

CONFIGS: dict[str, dict] = {c["name"]: c for c in (_EX1, _EX2, _EX3, _EX4)}

# Expected results: reference values and the tolerance bands checked by the harness.
MANIFESTS: dict[str, dict[str, Any]] = {
    "example1": {"alpha": 0.0234, "alpha_rel_tol": 0.30, "max_k": 6, "v_max": 0.05, "min_pass": 4},
    "example2": {"alpha": 8.1e-3, "max_evals": 20, "v_max": 0.05, "min_pass": 4},
    "example3": {
        "alpha": 4.416e-3,
        "v_max_levels": [0.10, 0.05, 0.025],
        "calls": [35, 48, 65],
        "calls_rel_tol": 0.40,
        "min_pass": 4,
    },
    "example4": {
        "alpha_target": 1e-3,
        "stop_reason": "below-target",
        "max_experiments": 60,
        "first_family": "p_fe",
        "table_counts": {"p_fe": 23, "x_m": 10, "d_t": 2},
        "table_rel_tol": 0.60,
        "min_pass": 4,
    },
}

QUICK = {"n0": 2000, "n": 300, "k_max": 3, "restarts": 8, "n_starts": 16, "n_refine": 2, "halvings": 8}


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    config: dict
    expected: dict = field(default_factory=dict)

    def problem(self, seed: int = 0, **kw) -> Problem:
        return build_problem(self.config, seed, **kw)

    @property
    def session_overrides(self) -> dict:
        return dict(self.config.get("session", {}))


def get_case(name: str, lhs: int = 0) -> BenchmarkCase:
    """Builtin case by name; ``lhs > 0`` replaces the single observation at the mean
    with a maximin LHS design of that size (the pipeline example's space-filling variant)."""
    if name not in CONFIGS:
        raise KeyError(f"unknown case {name!r}; builtin cases: {', '.join(CONFIGS)}")
    cfg = copy.deepcopy(CONFIGS[name])
    if lhs:
        for nd in cfg["nodes"]:
            if nd["type"] == "surrogate":
                nd["initial_design"] = {"type": "lhs", "size": int(lhs)}
                nd.pop("initial", None)
        cfg["name"] = f"{name}-lhs{lhs}"
    return BenchmarkCase(cfg["name"], cfg, MANIFESTS.get(name, {}))


def example1() -> BenchmarkCase:
    return get_case("example1")


def example2() -> BenchmarkCase:
    return get_case("example2")


def example3() -> BenchmarkCase:
    return get_case("example3")


def example4(lhs: int = 0) -> BenchmarkCase:
    return get_case("example4", lhs)


BUILTINS: dict[str, Callable[[], BenchmarkCase]] = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
    "example4": example4,
}


def export_config(name: str, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(get_case(name).config, sort_keys=False))
    return path
