"""Importance samples annotated with the pruning statistic eta.

Samples are drawn in standard normal space ``u`` from either a Gaussian
mixture centered at design points of the finite-dimensional performance
function (one set per epistemic sigma point) or a uniform hypercube. All
weights are density ratios in ``u``-space, ``w = phi(u) / q(u)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .model_graph import ModelGraph
from .probspace import std_normal_logpdf
from .unscented import SigmaPointSet

log = logging.getLogger(__name__)

FD_STEP = 1e-5
MAX_ITER = 100
STEP_TOL = 1e-6
DEDUP_RADIUS = 1e-3
START_SCALE = math.sqrt(2.0)
# accepted as a mixture center when not fully converged
CENTER_G_TOL = 1e-2


class SingularGradientError(RuntimeError):
    pass


class PruningError(ValueError):
    pass


@dataclass(frozen=True)
class DesignPoint:
    u_star: np.ndarray
    norm: float
    converged: bool
    g_value_at_point: float
    n_iter: int = 0


def _fd_gradient(g, U, h=FD_STEP):
    """Central differences of a vectorized ``g`` at each row of ``U``."""
    k, m = U.shape
    steps = h * (1.0 + np.abs(U))
    P = np.repeat(U[:, None, :], 2 * m, axis=1)
    idx = np.arange(m)
    P[:, idx, idx] += steps
    P[:, m + idx, idx] -= steps
    vals = np.asarray(g(P.reshape(-1, m)), dtype=float).reshape(k, 2 * m)
    return (vals[:, :m] - vals[:, m:]) / (2.0 * steps)


def find_design_points(g: Callable[[np.ndarray], np.ndarray], U0, max_iter: int = MAX_ITER,
                       g_tol: float | None = None) -> list[DesignPoint | None]:
    """iHL-RF from several starts at once.

    ``g`` maps an ``(k, m)`` array of u-space points to ``k`` values. Starts
    whose gradient vanishes return ``None``.
    """
    U = np.array(U0, dtype=float, ndmin=2)
    k, m = U.shape
    if g_tol is None:
        g0 = float(np.asarray(g(np.zeros((1, m))))[0])
        g_tol = 1e-6 * (1.0 + abs(g0)) if math.isfinite(g0) else 1e-6
    G = np.asarray(g(U), dtype=float).copy()
    active = np.isfinite(G)
    singular = ~active
    converged = np.zeros(k, bool)
    n_iter = np.zeros(k, int)
    for it in range(max_iter):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        u, gu = U[ia], G[ia]
        grad = _fd_gradient(g, u)
        gn2 = np.sum(grad * grad, axis=1)
        bad = ~(gn2 > 1e-300) | ~np.all(np.isfinite(grad), axis=1)
        if bad.any():
            singular[ia[bad]] = True
            active[ia[bad]] = False
            keep = ~bad
            ia, u, gu, grad, gn2 = ia[keep], u[keep], gu[keep], grad[keep], gn2[keep]
            if ia.size == 0:
                break
        gnorm = np.sqrt(gn2)
        coef = (np.sum(grad * u, axis=1) - gu) / gn2
        d = coef[:, None] * grad - u
        unorm = np.linalg.norm(u, axis=1)
        c = 10.0 * (2.0 * unorm + 1.0) / gnorm
        merit = 0.5 * unorm**2 + c * np.abs(gu)
        slope = np.sum(u * d, axis=1) - c * np.abs(gu)
        t = np.ones(ia.size)
        pending = np.ones(ia.size, bool)
        u_new = u + d
        g_new = np.asarray(g(u_new), dtype=float).copy()
        for _ in range(30):
            m_new = 0.5 * np.sum(u_new * u_new, axis=1) + c * np.abs(g_new)
            ok = np.isfinite(g_new) & (m_new <= merit + 1e-4 * t * np.minimum(slope, 0.0))
            pending &= ~ok
            if not pending.any():
                break
            t[pending] *= 0.5
            u_new[pending] = u[pending] + t[pending, None] * d[pending]
            g_new[pending] = np.asarray(g(u_new[pending]), dtype=float)
        if pending.any():
            # no acceptable step: keep the last finite trial
            fail = pending & ~np.isfinite(g_new)
            u_new[fail], g_new[fail] = u[fail], gu[fail]
        step = np.linalg.norm(u_new - u, axis=1)
        U[ia], G[ia] = u_new, g_new
        n_iter[ia] = it + 1
        done = (step < STEP_TOL) & (np.abs(g_new) < g_tol)
        converged[ia[done]] = True
        active[ia[done]] = False
    out: list[DesignPoint | None] = []
    for i in range(k):
        if singular[i] and not converged[i]:
            out.append(None)
        else:
            out.append(DesignPoint(U[i].copy(), float(np.linalg.norm(U[i])), bool(converged[i]),
                                   float(G[i]), int(n_iter[i])))
    return out


def find_design_point(g: Callable[[np.ndarray], np.ndarray], u0, max_iter: int = MAX_ITER,
                      g_tol: float | None = None) -> DesignPoint:
    """Most probable failure point ``argmin |u| s.t. g(u) <= 0`` from one start.

    Raises
    ------
    SingularGradientError
        If the finite-difference gradient vanishes along the iteration.
    """
    res = find_design_points(g, np.atleast_2d(np.asarray(u0, dtype=float)), max_iter, g_tol)[0]
    if res is None:
        raise SingularGradientError("gradient of g is numerically zero")
    return res


# -- proposals ----------------------------------------------------------


@dataclass(frozen=True)
class ProposalMixture:
    """Equal-weight mixture of unit-covariance normals in u-space."""

    centers: np.ndarray
    kind: str = "mixture"
    fallback: bool = False

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        comp = rng.integers(len(self.centers), size=n)
        return self.centers[comp] + rng.standard_normal((n, self.dim))

    def logpdf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape[0])
        chunk = max(1, 2_000_000 // max(1, len(self.centers) * self.dim))
        for s in range(0, u.shape[0], chunk):
            diff = u[s : s + chunk, None, :] - self.centers[None, :, :]
            lp = std_normal_logpdf(diff)
            out[s : s + chunk] = special.logsumexp(lp, axis=1) - math.log(len(self.centers))
        return out

    def to_dict(self):
        return {"kind": self.kind, "centers": self.centers.tolist(), "fallback": self.fallback}


@dataclass(frozen=True)
class HypercubeProposal:
    """Uniform density on ``[-b, b]^m`` with ``b = Phi^-1(1 - p_min)``."""

    m: int
    p_min: float
    fallback: bool = False
    kind: str = "hypercube"

    @property
    def dim(self) -> int:
        return self.m

    @property
    def b(self) -> float:
        return float(special.ndtri(1.0 - self.p_min))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(-self.b, self.b, size=(n, self.m))

    def logpdf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        inside = np.all(np.abs(u) <= self.b, axis=-1)
        return np.where(inside, -self.m * math.log(2.0 * self.b), -np.inf)

    def to_dict(self):
        return {"kind": self.kind, "m": self.m, "p_min": self.p_min, "fallback": self.fallback}


def hypercube_proposal(m: int, p_min: float = 1e-3, fallback: bool = False) -> HypercubeProposal:
    if not 0 < p_min < 0.5:
        raise ValueError(f"p_min must lie in (0, 0.5), got {p_min}")
    return HypercubeProposal(m, p_min, fallback)


def dedup_centers(points: Sequence[np.ndarray], radius: float = DEDUP_RADIUS) -> np.ndarray:
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) >= radius for q in kept):
            kept.append(p)
    return np.array(kept)


def build_proposal(graph: ModelGraph, sigma_points: SigmaPointSet, restarts: int = 24,
                   rng: np.random.Generator | None = None, p_min: float = 1e-3):
    """Design-point mixture for the finite-dimensional model at every sigma point.

    Starts are the origin plus ``restarts - 1`` draws from ``N(0, 2I)`` in
    antithetic pairs ``(z, -z)``;
    the search for sigma point ``j`` is warm-started at the solutions for
    ``j - 1``. Falls back to the hypercube proposal when no search lands on
    the limit state.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    m = graph.rv.dim
    n_rand = max(restarts, 1) - 1
    half = START_SCALE * rng.standard_normal(((n_rand + 1) // 2, m))
    starts = np.vstack([np.zeros((1, m)), np.stack([half, -half], axis=1).reshape(-1, m)[:n_rand]])
    centers = []
    U = starts
    for e in sigma_points.points:
        def g(u, e=e):
            with np.errstate(all="ignore"):
                return graph.eval_xi_hat(graph.rv.from_standard_normal(u), e)

        g0 = float(g(np.zeros((1, m)))[0])
        scale = 1.0 + abs(g0) if math.isfinite(g0) else 1.0
        res = find_design_points(g, U)
        nxt = U.copy()
        for i, dp in enumerate(res):
            if dp is None:
                continue
            if dp.converged or abs(dp.g_value_at_point) <= CENTER_G_TOL * scale:
                centers.append(dp.u_star)
                nxt[i] = dp.u_star
        U = nxt
    if not centers:
        log.warning("no design point found; using hypercube proposal")
        return hypercube_proposal(m, p_min, fallback=True)
    return ProposalMixture(dedup_centers(centers))


# -- samples ------------------------------------------------------------


@dataclass(frozen=True)
class WeightedSample:
    x: np.ndarray
    w: float
    eta_hat: float


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Struct-of-arrays view of ``{(x_i, w_i, eta_i)}`` in generation order.

    ``xi`` holds the finite-dimensional model at every sigma point,
    shape ``(M, N0)``; ``mu`` and ``sd`` are its UT moments.
    """

    u: np.ndarray
    x: np.ndarray
    w: np.ndarray
    mu: np.ndarray
    sd: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    n_clamped: int = 0

    def __len__(self) -> int:
        return len(self.w)

    def __getitem__(self, i: int) -> WeightedSample:
        return WeightedSample(self.x[i], float(self.w[i]), float(self.eta[i]))

    @property
    def n0(self) -> int:
        return len(self.w)


def eta_from_moments(mu, var):
    """``mu / sd`` with ``+-inf`` where the variance vanishes (``mu = 0`` counts as failure)."""
    mu = np.asarray(mu, dtype=float)
    sd = np.sqrt(np.maximum(var, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = mu / sd
    zero = sd == 0
    eta = np.where(zero, np.where(mu > 0, np.inf, -np.inf), eta)
    return eta


def ut_moments(sp: SigmaPointSet, xi: np.ndarray):
    """UT mean and clamped variance along axis 0; also the number of clamped entries."""
    mu = np.tensordot(sp.wm, xi, axes=1)
    var = np.tensordot(sp.wc, (xi - mu) ** 2, axes=1)
    neg = var < 0
    return mu, np.where(neg, 0.0, var), int(neg.sum())


def evaluate_sigma(graph: ModelGraph, x: np.ndarray, sp: SigmaPointSet) -> np.ndarray:
    """``xi_hat(x_i, e_j)`` for all sigma points, shape ``(M, N)``."""
    e = sp.points[:, None, :]
    return np.asarray(graph.eval_xi_hat(x, e), dtype=float)


def generate_samples(graph: ModelGraph, proposal, n0: int, rng: np.random.Generator,
                     sigma_points: SigmaPointSet) -> SampleSet:
    if n0 < 1:
        raise ValueError("N0 must be at least 1")
    u = proposal.sample(rng, n0)
    x = graph.rv.from_standard_normal(u)
    with np.errstate(over="ignore"):
        w = np.exp(std_normal_logpdf(u) - proposal.logpdf(u))
    xi = evaluate_sigma(graph, x, sigma_points)
    mu, var, n_neg = ut_moments(sigma_points, xi)
    if n_neg:
        log.debug("clamped %d negative UT variances", n_neg)
    return SampleSet(u, x, w, mu, np.sqrt(var), eta_from_moments(mu, var), xi, n_neg)


def standard_normal_proposal(m: int) -> ProposalMixture:
    return ProposalMixture(np.zeros((1, m)), kind="standard")


@dataclass(frozen=True, eq=False)
class Pruning:
    """Index split of a sample set at threshold ``tau``.

    ``kept`` is ``I_tau`` in generation order; ``pruned`` its complement with
    assumed failure indicators ``signs`` (``eta <= 0``).
    """

    tau: float
    kept: np.ndarray
    pruned: np.ndarray
    signs: np.ndarray
    n0: int = field(default=0)

    @property
    def n_tau(self) -> int:
        return len(self.kept)

    def first(self, n: int) -> np.ndarray:
        """``I_tau^n``: the first ``n`` kept indices."""
        return self.kept[:n]


def prune(samples: SampleSet, tau: float) -> Pruning:
    if not tau > math.sqrt(2.0):
        raise PruningError(
            f"tau must exceed sqrt(2) for the sign-flip bound to hold, got {tau}"
        )
    eta = samples.eta
    keep = np.abs(eta) < tau
    kept = np.flatnonzero(keep)
    pruned = np.flatnonzero(~keep)
    return Pruning(float(tau), kept, pruned, eta[pruned] <= 0, len(eta))


def chebyshev_flip_bound(tau: float) -> float:
    """Distribution-free bound on a sign flip at ``|eta| >= tau``."""
    return 2.0 / tau**2 * (1.0 - 1.0 / tau**2)


def gaussian_flip_bound(tau: float) -> float:
    return float(2.0 * special.ndtr(tau) * special.ndtr(-tau))
