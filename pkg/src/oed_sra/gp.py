"""Gaussian-process surrogates with a Matérn 5/2 kernel and constant prior mean."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.spatial import distance

log = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
JITTER_START = 1e-10
JITTER_MAX = 1e-4
N_REFIT_STARTS = 8
REFIT_SEED = 20200701


class IllConditionedModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class Kernel:
    """Anisotropic Matérn 5/2 covariance ``sigma_c^2 (1 + √5 r + 5r²/3) exp(-√5 r)``."""

    sigma_c: float
    lengthscales: tuple[float, ...]

    def __init__(self, sigma_c: float, lengthscales):
        ls = tuple(float(v) for v in np.atleast_1d(lengthscales))
        if not sigma_c > 0 or any(not v > 0 for v in ls):
            raise ValueError("kernel parameters must be positive")
        object.__setattr__(self, "sigma_c", float(sigma_c))
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def __call__(self, A, B) -> np.ndarray:
        """Cross-covariance matrix between row sets ``A`` (p×n) and ``B`` (q×n)."""
        ls = np.asarray(self.lengthscales)
        A = np.asarray(A, dtype=float) / ls
        B = np.asarray(B, dtype=float) / ls
        return _matern_profile(distance.cdist(A, B), self.sigma_c)

    def diag(self, A) -> np.ndarray:
        return np.full(np.asarray(A).shape[0], self.sigma_c**2)


def _matern_profile(r, sigma_c):
    s = SQRT5 * r
    return sigma_c**2 * (1.0 + s + s * s / 3.0) * np.exp(-s)


def matern52(kernel: Kernel, x, xp) -> float:
    """Kernel value for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != (kernel.dim,) or xp.shape != (kernel.dim,):
        raise ValueError(f"points must have dimension {kernel.dim}")
    r = math.sqrt(float(np.sum(((x - xp) / np.asarray(kernel.lengthscales)) ** 2)))
    return float(_matern_profile(r, kernel.sigma_c))


def _cholesky(K: np.ndarray, scale: float) -> np.ndarray:
    jitter = JITTER_START
    eye = np.eye(K.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return linalg.cholesky(K + jitter * scale * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            jitter *= 10.0
    raise IllConditionedModelError(
        f"kernel matrix of size {K.shape[0]} not positive definite after jitter {JITTER_MAX:g}"
    )


@dataclass(frozen=True, eq=False)
class GpSurrogate:
    """GP with constant prior mean conditioned on a set of observations.

    Instances are immutable; :meth:`condition` and
    :meth:`refit_hyperparameters` return new objects. ``base_kernel`` keeps
    the initial hyperparameters, which anchor the refit bounds.
    """

    prior_mean: float
    kernel: Kernel
    noise_sd: float = 0.0
    X: np.ndarray = field(default=None, repr=False)
    y: np.ndarray = field(default=None, repr=False)
    obs_noise: np.ndarray = field(default=None, repr=False)
    base_kernel: Kernel | None = field(default=None, repr=False)
    _L: np.ndarray = field(default=None, init=False, repr=False, compare=False)
    _alpha: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.kernel.dim
        X = np.zeros((0, n)) if self.X is None else np.asarray(self.X, dtype=float).reshape(-1, n)
        y = np.zeros(0) if self.y is None else np.asarray(self.y, dtype=float).reshape(-1)
        if self.obs_noise is None:
            noise = np.full(len(y), float(self.noise_sd))
        else:
            noise = np.asarray(self.obs_noise, dtype=float).reshape(-1)
        if not (len(X) == len(y) == len(noise)):
            raise ValueError("observation arrays have inconsistent lengths")
        if self.noise_sd < 0 or np.any(noise < 0):
            raise ValueError("noise standard deviations must be nonnegative")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "obs_noise", noise)
        if self.base_kernel is None:
            object.__setattr__(self, "base_kernel", self.kernel)
        if len(y):
            K = self.kernel(X, X) + np.diag(noise**2)
            L = _cholesky(K, self.kernel.sigma_c**2)
            alpha = linalg.cho_solve((L, True), y - self.prior_mean, check_finite=False)
            object.__setattr__(self, "_L", L)
            object.__setattr__(self, "_alpha", alpha)

    @property
    def dim(self) -> int:
        return self.kernel.dim

    @property
    def n_obs(self) -> int:
        return len(self.y)

    def _as_points(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1 and self.dim == 1:
            xs = xs[:, None]
        xs = np.atleast_2d(xs)
        if xs.shape[-1] != self.dim:
            raise ValueError(f"query points must have dimension {self.dim}, got {xs.shape}")
        return xs

    def whitened_cross(self, xs) -> np.ndarray:
        """``L^-1 c(X, xs)``: the quantity shared by posterior means and covariances."""
        xs = self._as_points(xs)
        Kx = self.kernel(self.X, xs)
        return linalg.solve_triangular(self._L, Kx, lower=True, check_finite=False)

    def posterior_moments(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean vector and full covariance matrix at ``xs``."""
        xs = self._as_points(xs)
        prior = self.kernel(xs, xs)
        if self.n_obs == 0:
            return np.full(len(xs), self.prior_mean), prior
        Kx = self.kernel(self.X, xs)
        V = linalg.solve_triangular(self._L, Kx, lower=True, check_finite=False)
        mean = self.prior_mean + Kx.T @ self._alpha
        return mean, prior - V.T @ V

    def mean_var(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and marginal variance (clipped at zero) at ``xs``."""
        xs = self._as_points(xs)
        if self.n_obs == 0:
            return np.full(len(xs), self.prior_mean), self.kernel.diag(xs)
        Kx = self.kernel(self.X, xs)
        V = linalg.solve_triangular(self._L, Kx, lower=True, check_finite=False)
        mean = self.prior_mean + Kx.T @ self._alpha
        var = self.kernel.sigma_c**2 - np.einsum("ij,ij->j", V, V)
        return mean, np.maximum(var, 0.0)

    def condition(self, x, y: float, noise_sd: float | None = None) -> "GpSurrogate":
        """Surrogate conditioned additionally on ``(x, y)``."""
        x = self._as_points(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))
        noise = self.noise_sd if noise_sd is None else float(noise_sd)
        if not math.isfinite(y):
            raise ValueError("observation must be finite")
        if noise == 0 and self.n_obs:
            same = np.all(np.isclose(self.X, x, rtol=0, atol=1e-12), axis=1) & (self.obs_noise == 0)
            if np.any(same):
                prev = self.y[np.argmax(same)]
                if abs(prev - y) > 1e-9 * (1 + abs(y)):
                    raise IllConditionedModelError(
                        f"conflicting noiseless observations at {x.ravel()}: {prev} vs {y}"
                    )
                return self
        return replace(
            self,
            X=np.vstack([self.X, x]),
            y=np.append(self.y, y),
            obs_noise=np.append(self.obs_noise, noise),
        )

    def with_kernel(self, kernel: Kernel) -> "GpSurrogate":
        return replace(self, kernel=kernel)

    def log_marginal_likelihood(self, kernel: Kernel | None = None) -> float:
        kernel = self.kernel if kernel is None else kernel
        if self.n_obs == 0:
            return 0.0
        K = kernel(self.X, self.X) + np.diag(self.obs_noise**2)
        L = _cholesky(K, kernel.sigma_c**2)
        r = self.y - self.prior_mean
        a = linalg.solve_triangular(L, r, lower=True, check_finite=False)
        return float(-0.5 * a @ a - np.sum(np.log(np.diag(L))) - 0.5 * self.n_obs * math.log(2 * math.pi))

    def refit_hyperparameters(self, min_obs: int, seed: int = REFIT_SEED) -> "GpSurrogate":
        """Maximum-likelihood ``(sigma_c, lengthscales)`` once ``min_obs`` observations exist.

        Deterministic multistart Powell search in log-parameters, bounded to
        ``[1e-2, 1e2]`` times the base ``sigma_c`` and ``[1e-3, 1e3]`` times the
        base lengthscales. Keeps the incumbent if no start yields a finite
        objective.
        """
        if self.n_obs < max(int(min_obs), 1):
            return self
        base = self.base_kernel
        lo = np.log(np.r_[base.sigma_c * 1e-2, np.asarray(base.lengthscales) * 1e-3])
        hi = np.log(np.r_[base.sigma_c * 1e2, np.asarray(base.lengthscales) * 1e3])
        theta0 = np.clip(np.log(np.r_[self.kernel.sigma_c, self.kernel.lengthscales]), lo, hi)

        def objective(theta):
            try:
                val = -self.log_marginal_likelihood(Kernel(math.exp(theta[0]), np.exp(theta[1:])))
            except (IllConditionedModelError, FloatingPointError, ValueError):
                return 1e300
            return val if math.isfinite(val) else 1e300

        rng = np.random.default_rng(seed)
        starts = [theta0]
        for _ in range(N_REFIT_STARTS - 1):
            starts.append(np.clip(theta0 + rng.uniform(-math.log(10), math.log(10), theta0.size), lo, hi))
        best_theta, best_val = theta0, objective(theta0)
        for s in starts:
            res = optimize.minimize(objective, s, method="Powell", bounds=list(zip(lo, hi)),
                                    options={"xtol": 1e-4, "ftol": 1e-8, "maxfev": 2000})
            if res.fun < best_val:
                best_theta, best_val = np.clip(res.x, lo, hi), float(res.fun)
        if best_val >= 1e300:
            log.warning("hyperparameter refit failed at every start; keeping incumbent")
            return self
        return self.with_kernel(Kernel(math.exp(best_theta[0]), np.exp(best_theta[1:])))

    def to_dict(self) -> dict[str, Any]:
        return {
            "prior_mean": self.prior_mean,
            "sigma_c": self.kernel.sigma_c,
            "lengthscales": list(self.kernel.lengthscales),
            "base_sigma_c": self.base_kernel.sigma_c,
            "base_lengthscales": list(self.base_kernel.lengthscales),
            "noise_sd": self.noise_sd,
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "obs_noise": self.obs_noise.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GpSurrogate":
        n = len(d["lengthscales"])
        return cls(
            prior_mean=float(d["prior_mean"]),
            kernel=Kernel(d["sigma_c"], d["lengthscales"]),
            noise_sd=float(d.get("noise_sd", 0.0)),
            X=np.asarray(d.get("X", []), dtype=float).reshape(-1, n),
            y=np.asarray(d.get("y", []), dtype=float),
            obs_noise=np.asarray(d["obs_noise"], dtype=float) if "obs_noise" in d else None,
            base_kernel=Kernel(d.get("base_sigma_c", d["sigma_c"]),
                               d.get("base_lengthscales", d["lengthscales"])),
        )


def make_gp(prior_mean: float, sigma_c: float, lengthscales: Sequence[float] | float,
            noise_sd: float = 0.0) -> GpSurrogate:
    return GpSurrogate(prior_mean, Kernel(sigma_c, lengthscales), noise_sd)
