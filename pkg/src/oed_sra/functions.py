"""Named deterministic functions usable as graph nodes and oracles.

Config files refer to these by name. All functions broadcast over numpy
arrays.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

REGISTRY: dict[str, Callable] = {}


def register(name: str):
    def deco(fn):
        if name in REGISTRY:
            raise ValueError(f"function {name!r} registered twice")
        REGISTRY[name] = fn
        return fn

    return deco


def lookup(name: str) -> Callable:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown function {name!r}; known: {', '.join(sorted(REGISTRY))}") from None


# -- generic ----------------------------------------------------------

register("identity")(lambda a: a)
register("negate")(lambda a: -a)
register("sum")(lambda *a: sum(a))
register("difference")(lambda a, b: a - b)
register("product")(lambda a, b: a * b)


# -- one-dimensional bimodal limit state -------------------------------


@register("bimodal_1d")
def bimodal_1d(x):
    x = np.asarray(x, dtype=float)
    return 1.0 - ((0.4 * x - 0.3) ** 2 + np.exp(-11.534 * np.abs(x) ** 1.95) + np.exp(-5.0 * (x - 0.8) ** 2))


# -- four branch system -----------------------------------------------

_R2 = np.sqrt(2.0)


@register("four_branch")
def four_branch(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    q = 3.0 + 0.1 * (x1 - x2) ** 2
    s = (x1 + x2) / _R2
    return np.minimum(np.minimum(q - s, q + s), np.minimum((x1 - x2) + 6.0 / _R2, (x2 - x1) + 6.0 / _R2))


# -- RP38 three-layer model ---------------------------------------------

C1, C2, C3, C4 = 15.59e4, 6e4, 2e5, 1e6


@register("rp38.y1")
def rp38_y1(x1, x2, x3):
    return x1 * x2**3 / (2.0 * C4 * x3**3)


@register("rp38.y2")
def rp38_y2(x4):
    return np.asarray(x4, dtype=float) ** 2 / C2


@register("rp38.y3")
def rp38_y3(x4, x5, x6, x7):
    return -4.0 * x5 * x6 * x7**2 + x4 * (x6 + 4.0 * x5 + 2.0 * x6 * x7)


@register("rp38.y4")
def rp38_y4(x4, x5, x6, x7):
    return x4 * x5 * (x4 + x6 + 2.0 * x6 * x7)


@register("rp38.z1")
def rp38_z1(y1, y2):
    return C4 * y1 * y2 / C3


@register("rp38.g")
def rp38_g(z1, y1, y3, y4):
    return 1.0 - (C2 * C3 * z1 + C4 * y1 * y3) / (C1 * y4)


def rp38_full(x):
    """Limit state of the RP38 model from the full input vector, shape ``(..., 7)``."""
    x = np.asarray(x, dtype=float)
    x1, x2, x3, x4, x5, x6, x7 = np.moveaxis(x, -1, 0)
    y1 = rp38_y1(x1, x2, x3)
    z1 = rp38_z1(y1, rp38_y2(x4))
    return rp38_g(z1, y1, rp38_y3(x4, x5, x6, x7), rp38_y4(x4, x5, x6, x7))


# -- corroded pipeline ---------------------------------------------------

PIPE_D = 800.0
PIPE_SIGMA_M = 0.1


@register("pipe.p_fe")
def pipe_p_fe(t, s, dt, l):
    """Burst capacity of a pipe with a rectangular defect of relative depth ``dt``."""
    t = np.asarray(t, dtype=float)
    Q = np.sqrt(1.0 + 0.31 * np.asarray(l, dtype=float) ** 2 / (PIPE_D * t))
    return 1.05 * (2.0 * t * s / (PIPE_D - t)) * (1.0 - dt) / (1.0 - dt / Q)


@register("pipe.x_m")
def pipe_x_m(mu_m, z):
    return mu_m + PIPE_SIGMA_M * np.asarray(z, dtype=float)


@register("pipe.g")
def pipe_g(x_m, p_fe, p_d):
    return x_m * p_fe - p_d
