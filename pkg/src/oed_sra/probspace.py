"""Aleatory random vectors with independent marginals.

The isoprobabilistic map ``T`` sends ``x`` to standard normal space
componentwise, ``u_i = Phi^-1(F_i(x_i))``; its inverse is used to map
proposal draws back to physical coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy import special, stats

EULER_GAMMA = 0.5772156649015329

_KINDS = ("normal", "gumbel", "lognormal")


class DomainError(ValueError):
    """Raised when a point lies outside the support of a marginal."""


@dataclass(frozen=True)
class Marginal:
    """One-dimensional marginal law parameterized by mean and standard deviation.

    ``kind`` is one of ``"normal"``, ``"gumbel"`` (maximum type, as used for
    pressure loads) or ``"lognormal"``.
    """

    kind: str
    mean: float
    sd: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown marginal kind {self.kind!r}; expected one of {_KINDS}")
        if not self.sd > 0:
            raise ValueError(f"marginal sd must be positive, got {self.sd}")
        if self.kind == "lognormal" and not self.mean > 0:
            raise ValueError("lognormal marginal needs a positive mean")

    # Gumbel location/scale from the first two moments.
    @property
    def gumbel_scale(self) -> float:
        return self.sd * math.sqrt(6.0) / math.pi

    @property
    def gumbel_loc(self) -> float:
        return self.mean - EULER_GAMMA * self.gumbel_scale

    @property
    def lognormal_params(self) -> tuple[float, float]:
        s2 = math.log1p((self.sd / self.mean) ** 2)
        return math.log(self.mean) - 0.5 * s2, math.sqrt(s2)

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "lognormal":
            return x > 0
        return np.isfinite(x)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return special.ndtr((x - self.mean) / self.sd)
        if self.kind == "gumbel":
            z = (x - self.gumbel_loc) / self.gumbel_scale
            return np.exp(-np.exp(-z))
        mu, s = self.lognormal_params
        with np.errstate(divide="ignore"):
            return special.ndtr((np.log(np.maximum(x, 0.0)) - mu) / s)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "normal":
            return self.mean + self.sd * special.ndtri(p)
        if self.kind == "gumbel":
            return self.gumbel_loc - self.gumbel_scale * np.log(-np.log(p))
        mu, s = self.lognormal_params
        return np.exp(mu + s * special.ndtri(p))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return stats.norm.logpdf(x, self.mean, self.sd)
        if self.kind == "gumbel":
            return stats.gumbel_r.logpdf(x, self.gumbel_loc, self.gumbel_scale)
        mu, s = self.lognormal_params
        return stats.lognorm.logpdf(x, s, scale=math.exp(mu))

    def to_u(self, x):
        """Map to standard normal space without losing precision in either tail."""
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return (x - self.mean) / self.sd
        if self.kind == "lognormal":
            mu, s = self.lognormal_params
            with np.errstate(divide="ignore", invalid="ignore"):
                return (np.log(x) - mu) / s
        z = (x - self.gumbel_loc) / self.gumbel_scale
        log_cdf = -np.exp(-z)
        # sf = 1 - exp(-exp(-z)) computed without cancellation for the upper tail
        sf = -np.expm1(log_cdf)
        lower = special.ndtri(np.exp(log_cdf))
        upper = -special.ndtri(sf)
        return np.where(log_cdf < math.log(0.5), lower, upper)

    def from_u(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "normal":
            return self.mean + self.sd * u
        if self.kind == "lognormal":
            mu, s = self.lognormal_params
            return np.exp(mu + s * u)
        # -log(Phi(u)) evaluated through log_ndtr keeps the upper tail accurate
        neg_log_p = -special.log_ndtr(u)
        return self.gumbel_loc - self.gumbel_scale * np.log(neg_log_p)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.from_u(rng.standard_normal(n))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "mean": self.mean, "sd": self.sd}

    @classmethod
    def from_dict(cls, spec: dict[str, Any]) -> "Marginal":
        kind = str(spec["kind"]).lower()
        if "sd" in spec:
            sd = float(spec["sd"])
        elif "cov" in spec:
            sd = float(spec["cov"]) * float(spec["mean"])
        elif "var" in spec:
            sd = math.sqrt(float(spec["var"]))
        else:
            raise ValueError(f"marginal spec needs one of sd/cov/var: {spec}")
        return cls(kind, float(spec["mean"]), sd)


def Normal(mean: float, sd: float) -> Marginal:
    return Marginal("normal", mean, sd)


def Gumbel(mean: float, sd: float) -> Marginal:
    return Marginal("gumbel", mean, sd)


def LogNormal(mean: float, sd: float) -> Marginal:
    return Marginal("lognormal", mean, sd)


@dataclass(frozen=True)
class RandomVector:
    """Vector of independent marginals ``X = (X_1, ..., X_m)``."""

    marginals: tuple[Marginal, ...]

    def __init__(self, marginals: Sequence[Marginal]):
        object.__setattr__(self, "marginals", tuple(marginals))
        if not self.marginals:
            raise ValueError("a random vector needs at least one marginal")

    @property
    def dim(self) -> int:
        return len(self.marginals)

    def _check(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {a.shape}")
        return a

    def to_standard_normal(self, x) -> np.ndarray:
        x = self._check(x)
        for i, marg in enumerate(self.marginals):
            ok = marg.in_support(x[..., i])
            if not np.all(ok):
                bad = np.asarray(x[..., i])[~np.asarray(ok)].ravel()[0]
                raise DomainError(f"component {i} ({marg.kind}) value {bad} outside support")
        return np.stack([m.to_u(x[..., i]) for i, m in enumerate(self.marginals)], axis=-1)

    def from_standard_normal(self, u) -> np.ndarray:
        u = self._check(u)
        return np.stack([m.from_u(u[..., i]) for i, m in enumerate(self.marginals)], axis=-1)

    def log_density(self, x) -> np.ndarray:
        """Sum of marginal log densities; ``-inf`` outside the support."""
        x = self._check(x)
        out = np.zeros(x.shape[:-1])
        with np.errstate(divide="ignore", invalid="ignore"):
            for i, m in enumerate(self.marginals):
                lp = m.logpdf(x[..., i])
                out = out + np.where(m.in_support(x[..., i]), lp, -np.inf)
        return out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.from_standard_normal(rng.standard_normal((n, self.dim)))

    @property
    def means(self) -> np.ndarray:
        return np.array([m.mean for m in self.marginals])

    @property
    def sds(self) -> np.ndarray:
        return np.array([m.sd for m in self.marginals])

    def to_list(self) -> list[dict[str, Any]]:
        return [m.to_dict() for m in self.marginals]

    @classmethod
    def from_list(cls, specs: Sequence[dict[str, Any]]) -> "RandomVector":
        return cls([Marginal.from_dict(s) for s in specs])


def std_normal_logpdf(u) -> np.ndarray:
    """Log density of the multivariate standard normal along the last axis."""
    u = np.asarray(u, dtype=float)
    return -0.5 * np.sum(u * u, axis=-1) - 0.5 * u.shape[-1] * math.log(2 * math.pi)
