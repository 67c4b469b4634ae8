"""Sigma points (van der Merwe scheme) and unscented moment propagation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_ALPHA = 0.9
DEFAULT_BETA = 2.0


class SigmaPointError(ValueError):
    pass


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SigmaPointSet:
    """Weighted points for a standard normal vector of dimension ``n``.

    ``points`` has shape ``(2n+1, n)``; ``wm`` and ``wc`` are the weights
    used for the mean and the covariance respectively. ``n == 0`` gives the
    single point at the origin with unit weights.
    """

    points: np.ndarray
    wm: np.ndarray
    wc: np.ndarray
    alpha: float
    beta: float
    kappa: float

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def mean(self, values: np.ndarray, axis: int = 0) -> np.ndarray:
        """Weighted mean of ``values`` stacked along ``axis`` (one slice per point)."""
        return np.tensordot(self.wm, np.moveaxis(values, axis, 0), axes=1)

    def var(self, values: np.ndarray, axis: int = 0) -> np.ndarray:
        """Scalar UT variance of ``values`` stacked along ``axis``.

        May be negative when the central covariance weight is negative.
        """
        v = np.moveaxis(values, axis, 0)
        mu = np.tensordot(self.wm, v, axes=1)
        return np.tensordot(self.wc, (v - mu) ** 2, axes=1)


def merwe_sigma_points(n: int, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                       kappa: float | None = None) -> SigmaPointSet:
    """Scaled sigma points for ``U ~ N(0, I_n)``.

    Parameters
    ----------
    n : int
        Dimension of the standard normal vector.
    alpha, beta : float
        Spread and prior-knowledge parameters.
    kappa : float, optional
        Secondary scaling; defaults to ``3 - n``.

    Returns
    -------
    SigmaPointSet
        ``2n+1`` points ``0, +-alpha*sqrt(n+kappa) e_i`` with their weights.
    """
    if n < 0:
        raise SigmaPointError(f"dimension must be nonnegative, got {n}")
    if kappa is None:
        kappa = 3.0 - n
    if n == 0:
        one = np.ones(1)
        return SigmaPointSet(np.zeros((1, 0)), one, one.copy(), alpha, beta, kappa)
    if not 0 < alpha <= 1:
        raise SigmaPointError(f"alpha must lie in (0, 1], got {alpha}")
    if n + kappa <= 0:
        raise SigmaPointError(f"n + kappa must be positive, got n={n}, kappa={kappa}")
    lam = alpha**2 * (n + kappa)
    spread = np.sqrt(lam)
    pts = np.zeros((2 * n + 1, n))
    pts[1 : n + 1] = spread * np.eye(n)
    pts[n + 1 :] = -spread * np.eye(n)
    wm = np.full(2 * n + 1, 1.0 / (2.0 * lam))
    wc = wm.copy()
    wm[0] = 1.0 - n / lam
    wc[0] = wm[0] + 1.0 - alpha**2 + beta
    return SigmaPointSet(pts, wm, wc, alpha, beta, kappa)


def propagate(sp: SigmaPointSet, f: Callable[[np.ndarray], object]):
    """UT mean and covariance of ``f(U)``.

    ``f`` maps one point to a scalar or a vector. Returns ``(mean, cov)``;
    for scalar outputs ``cov`` is a float.
    """
    ys = []
    for i, u in enumerate(sp.points):
        y = np.asarray(f(u), dtype=float)
        if not np.all(np.isfinite(y)):
            raise PropagationError(f"non-finite value at sigma point {i}")
        ys.append(y)
    Y = np.stack(ys)
    mean = np.tensordot(sp.wm, Y, axes=1)
    D = Y - mean
    if Y.ndim == 1:
        return float(mean), float(np.dot(sp.wc, D * D))
    cov = np.einsum("i,ij,ik->jk", sp.wc, D, D)
    return mean, cov


def sigma_points_for(sp: SigmaPointSet, transform: Callable[[np.ndarray], np.ndarray] | None = None):
    """Map standard-normal sigma points through an inverse isoprobabilistic map.

    Returns ``(points, wm, wc)``; the weights are unchanged.
    """
    pts = sp.points if transform is None else np.asarray(transform(sp.points), dtype=float)
    return pts, sp.wm, sp.wc
