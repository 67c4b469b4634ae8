"""Pruned importance-sampling estimators and UT-MCIS residual uncertainty.

The pruned estimator splits the IS sum into the pruned-away samples, whose
integrand values are assumed known, and the first ``n`` of the kept
samples, which are rescaled by ``N_tau / n``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .model_graph import ModelGraph
from .sampling import Pruning, SampleSet, prune
from .unscented import SigmaPointSet

log = logging.getLogger(__name__)


class DegenerateEstimateError(ValueError):
    pass


@dataclass(frozen=True)
class PrunedEstimate:
    value: float
    sample_variance: float
    h_bar: float
    r_bar: float
    n_used: int
    N_tau: int
    N0: int


@dataclass(frozen=True)
class ResidualUncertainty:
    """UT-MCIS summary of the epistemic failure probability at one iteration."""

    h1: float
    h2: float
    h3: float
    alpha_mean: float
    v_k: float
    alpha_sigma: tuple[float, ...] = ()
    n_tau: int = 0
    n_clamped: int = 0

    def to_dict(self):
        return {
            "alpha_mean": self.alpha_mean,
            "h1": self.h1,
            "h2": self.h2,
            "h3": self.h3,
            "v_k": self.v_k,
            "n_tau": self.n_tau,
        }


def _as_pruning(samples: SampleSet, tau_or_pruning) -> Pruning:
    if isinstance(tau_or_pruning, Pruning):
        return tau_or_pruning
    return prune(samples, float(tau_or_pruning))


def split_scale(pruning: Pruning, n: int) -> tuple[np.ndarray, float]:
    """``I_tau^n`` and its weight ``N_tau / (n N0)``."""
    idx = pruning.first(n)
    if pruning.n_tau and idx.size == 0:
        raise DegenerateEstimateError("no kept samples selected although I_tau is nonempty")
    scale = pruning.n_tau / (idx.size * pruning.n0) if idx.size else 0.0
    return idx, scale


def pruned_expectation(w: np.ndarray, pruning: Pruning, n: int, f_kept, f_pruned=None,
                       x: np.ndarray | None = None) -> PrunedEstimate:
    """Pruned IS estimate of ``E[f(X)]`` with its variance estimate.

    Parameters
    ----------
    w : array (N0,)
        Importance weights in generation order.
    pruning : Pruning
        Split at the threshold; ``f`` on pruned-away samples defaults to the
        assumed failure indicators ``eta <= 0``.
    n : int
        Evaluation budget; only the first ``n`` kept samples are used.
    f_kept : callable or array
        Values of ``f`` on ``I_tau^n`` or a vectorized function of ``x``.
    """
    w = np.asarray(w, dtype=float)
    N0, Nt = pruning.n0, pruning.n_tau
    idx, scale = split_scale(pruning, n)
    if callable(f_kept):
        if x is None:
            raise ValueError("x is needed to evaluate f")
        f_kept = f_kept(x[idx])
    fk = np.asarray(f_kept, dtype=float)
    fp = pruning.signs.astype(float) if f_pruned is None else np.asarray(f_pruned, dtype=float)
    hw = fp * w[pruning.pruned]
    h_bar = float(hw.sum()) / N0
    rw = fk * w[idx]
    r_bar = scale * float(rw.sum())
    s_h = float(np.dot(hw, hw)) / N0
    var = (s_h - h_bar**2) / (N0 - 1) if N0 > 1 else 0.0
    if Nt:
        denom = idx.size * N0 - Nt
        tail = -r_bar**2 + Nt / (idx.size * N0) * float(np.dot(rw, rw))
        var += Nt / denom * tail if denom > 0 else (math.inf if tail > 0 else 0.0)
    return PrunedEstimate(h_bar + r_bar, max(var, 0.0), h_bar, r_bar, int(idx.size), Nt, N0)


def h_bar1(samples: SampleSet, pruning: Pruning) -> float:
    return float(np.sum(samples.w[pruning.pruned] * pruning.signs)) / pruning.n0


def alpha_at_sigma(xi_kept: np.ndarray, w_kept: np.ndarray, h1bar: float, scale: float) -> np.ndarray:
    """``alpha_hat^j`` for stacked finite-dimensional values ``(..., M, n)``."""
    return h1bar + scale * np.sum((xi_kept <= 0) * w_kept, axis=-1)


def ut_variance(sp: SigmaPointSet, values: np.ndarray, axis: int = -1):
    """UT mean and variance along ``axis`` with the covariance weights."""
    v = np.moveaxis(values, axis, -1)
    mean = v @ sp.wm
    var = ((v - mean[..., None]) ** 2) @ sp.wc
    return mean, var


def ut_mcis_h1(samples: SampleSet, tau_or_pruning, n: int, sigma_points: SigmaPointSet):
    """``(E[alpha_hat], H1_hat, alpha_hat per sigma point)``.

    ``samples.xi`` must hold the model at the same sigma points.
    """
    pr = _as_pruning(samples, tau_or_pruning)
    idx, scale = split_scale(pr, n)
    hb = h_bar1(samples, pr)
    alphas = alpha_at_sigma(samples.xi[:, idx], samples.w[idx], hb, scale)
    mean, h1 = ut_variance(sigma_points, alphas)
    if h1 < 0:
        log.warning("negative UT variance of alpha (%.3g) clamped to zero", h1)
        h1 = 0.0
    return float(mean), float(h1), alphas


def gamma_hat(eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return special.ndtr(eta) * special.ndtr(-eta)


def ut_mcis_h2_h3(samples: SampleSet, tau_or_pruning, n: int,
                  conservative_tails: bool = False) -> tuple[float, float]:
    pr = _as_pruning(samples, tau_or_pruning)
    idx, scale = split_scale(pr, n)
    g = gamma_hat(samples.eta[idx])
    w = samples.w[idx]
    hb2 = hb3 = 0.0
    if conservative_tails:
        gt = float(gamma_hat(pr.tau))
        wsum = float(samples.w[pr.pruned].sum()) / pr.n0
        hb2, hb3 = gt * wsum, math.sqrt(gt) * wsum
    h2 = hb2 + scale * float(np.dot(g, w))
    h3 = (hb3 + scale * float(np.dot(np.sqrt(g), w))) ** 2
    return h2, h3


def coefficient_of_variation(alpha_mean: float, h1: float) -> float:
    if not alpha_mean > 0:
        return math.inf
    return math.sqrt(max(h1, 0.0)) / alpha_mean


def residual_uncertainty(samples: SampleSet, tau_or_pruning, n: int, sigma_points: SigmaPointSet,
                         conservative_tails: bool = False) -> ResidualUncertainty:
    pr = _as_pruning(samples, tau_or_pruning)
    mean, h1, alphas = ut_mcis_h1(samples, pr, n, sigma_points)
    h2, h3 = ut_mcis_h2_h3(samples, pr, n, conservative_tails)
    return ResidualUncertainty(h1, h2, h3, mean, coefficient_of_variation(mean, h1),
                               tuple(float(a) for a in alphas), pr.n_tau, samples.n_clamped)


@dataclass(frozen=True)
class DoubleLoopResult:
    alpha_samples: np.ndarray
    h1: float
    h2: float
    h3: float

    @property
    def alpha_mean(self) -> float:
        return float(self.alpha_samples.mean())

    @property
    def alpha_se(self) -> float:
        return float(self.alpha_samples.std(ddof=1) / math.sqrt(len(self.alpha_samples)))


def double_loop_mc(graph: ModelGraph, n1: int, n2: int, rng: np.random.Generator,
                   chunk: int = 200_000) -> DoubleLoopResult:
    """Plain Monte Carlo over ``E ~ N(0, I)`` (outer) and ``X`` (inner).

    Each outer realization ``e_j`` gets its own ``n1`` draws of ``X``, so
    ``alpha_hat_j`` are i.i.d. and ``H1`` is their sample variance. ``H2``
    and ``H3`` use ``p_hat(x_i)`` on a block of ``X`` shared by all ``e_j``.
    """
    D = graph.epistemic_dim
    E = rng.standard_normal((n2, D))
    alphas = np.empty(n2)
    for j in range(n2):
        fails = 0
        for s in range(0, n1, chunk):
            x = graph.rv.sample(rng, min(chunk, n1 - s))
            fails += int(np.count_nonzero(graph.eval_xi_hat(x, E[j]) <= 0))
        alphas[j] = fails / n1
    n_shared = min(n1, max(1, 4_000_000 // max(n2, 1)))
    xs = graph.rv.sample(rng, n_shared)
    p = np.zeros(n_shared)
    for j in range(n2):
        p += graph.eval_xi_hat(xs, E[j]) <= 0
    p /= n2
    gam = p * (1.0 - p)
    h1 = float(alphas.var(ddof=1)) if n2 > 1 else 0.0
    return DoubleLoopResult(alphas, h1, float(gam.mean()), float(np.sqrt(gam).mean() ** 2))


def direct_mc(g: Callable[[np.ndarray], np.ndarray], rv, n: int, rng: np.random.Generator,
              chunk: int = 1_000_000) -> tuple[float, float]:
    """Crude MC estimate of ``P(g(X) <= 0)`` and its standard error."""
    fails = 0
    for s in range(0, n, chunk):
        fails += int(np.count_nonzero(g(rv.sample(rng, min(chunk, n - s))) <= 0))
    p = fails / n
    return p, math.sqrt(max(p * (1 - p), 0.0) / n)
