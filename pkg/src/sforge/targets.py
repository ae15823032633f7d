"""Target distributions with hand-written scores.

Every target accepts either a single point of shape ``(D,)`` or a batch of
shape ``(m, D)`` in :meth:`TargetModel.log_density` and
:meth:`TargetModel.score`; batch inputs return one value per row.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import expit, logsumexp

from sforge.structure import FactorGraph, build_banded_graph, graph_from_precision


class NoSamplerError(TypeError):
    """Raised when exact samples are requested from a target without a sampler."""


class TargetModel:
    """Differentiable unnormalised density on R^D."""

    dim: int
    has_exact_sampler = False

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input to target")
        return x

    def log_density(self, x):
        x = self._check(x)
        out = self._log_density(np.atleast_2d(x))
        return float(out[0]) if x.ndim == 1 else out

    def score(self, x):
        x = self._check(x)
        out = self._score(np.atleast_2d(x))
        return out[0] if x.ndim == 1 else out

    @property
    def factor_graph(self) -> FactorGraph | None:
        return None

    @property
    def has_factor_graph(self) -> bool:
        return self.factor_graph is not None

    def sample(self, n: int, seed) -> np.ndarray:
        raise NoSamplerError(f"{type(self).__name__} has no exact sampler")

    def _log_density(self, X):
        raise NotImplementedError

    def _score(self, X):
        raise NotImplementedError


class GaussianTarget(TargetModel):
    has_exact_sampler = True

    def __init__(self, mean, cov):
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("mean must be (D,) and covariance (D, D)")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None
        self.dim = mean.size
        self.mean = mean
        self.cov = cov
        eye = np.eye(self.dim)
        Linv = np.linalg.solve(self._chol, eye)
        self.precision = Linv.T @ Linv
        self.precision = 0.5 * (self.precision + self.precision.T)
        self._log_norm = -0.5 * self.dim * math.log(2 * math.pi) - float(np.sum(np.log(np.diag(self._chol))))
        self._graph = None

    @classmethod
    def standard(cls, dim: int) -> "GaussianTarget":
        return cls(np.zeros(dim), np.eye(dim))

    @property
    def covariance(self) -> np.ndarray:
        return self.cov

    @property
    def factor_graph(self) -> FactorGraph:
        if self._graph is None:
            self._graph = graph_from_precision(self.precision, tol=1e-12)
        return self._graph

    def _log_density(self, X):
        Z = X - self.mean
        return self._log_norm - 0.5 * np.einsum("ij,jk,ik->i", Z, self.precision, Z)

    def _score(self, X):
        return -(X - self.mean) @ self.precision

    def sample(self, n: int, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T


class MixtureTarget(TargetModel):
    has_exact_sampler = True

    def __init__(self, weights, components: Sequence[GaussianTarget]):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or len(components) != w.size or w.size == 0:
            raise ValueError("need one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must lie on the simplex")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValueError("all components must share a dimension")
        self.weights = w
        self.components = list(components)
        self.dim = dims.pop()
        self._log_w = np.log(np.where(w > 0, w, 1.0)) + np.where(w > 0, 0.0, -np.inf)

    @property
    def mean(self) -> np.ndarray:
        return sum(w * c.mean for w, c in zip(self.weights, self.components))

    @property
    def covariance(self) -> np.ndarray:
        mu = self.mean
        out = np.zeros((self.dim, self.dim))
        for w, c in zip(self.weights, self.components):
            diff = c.mean - mu
            out += w * (c.cov + np.outer(diff, diff))
        return out

    def _component_logs(self, X):
        return np.stack([lw + c._log_density(X) for lw, c in zip(self._log_w, self.components)], axis=1)

    def _log_density(self, X):
        return logsumexp(self._component_logs(X), axis=1)

    def _score(self, X):
        L = self._component_logs(X)
        # responsibilities via max subtraction
        R = np.exp(L - L.max(axis=1, keepdims=True))
        R /= R.sum(axis=1, keepdims=True)
        out = np.zeros_like(X)
        for k, c in enumerate(self.components):
            out += R[:, k:k + 1] * c._score(X)
        return out

    def sample(self, n: int, seed, return_labels: bool = False):
        rng = np.random.default_rng(seed)
        labels = rng.choice(len(self.components), size=n, p=self.weights)
        Z = rng.standard_normal((n, self.dim))
        out = np.empty((n, self.dim))
        for k, c in enumerate(self.components):
            idx = labels == k
            out[idx] = c.mean + Z[idx] @ c._chol.T
        return (out, labels) if return_labels else out


def exact_sample(target: TargetModel, n: int, seed) -> np.ndarray:
    if not target.has_exact_sampler:
        raise NoSamplerError(f"{type(target).__name__} has no exact sampler")
    return target.sample(n, seed)


def block_correlation(dim: int, rhos: Sequence[float]) -> np.ndarray:
    """Block-diagonal matrix of 2x2 unit-diagonal blocks ``[[1, rho], [rho, 1]]``.

    ``rhos[k]`` is used for block ``k``; an odd trailing coordinate gets a 1x1
    block.
    """
    cov = np.eye(dim)
    for k in range(dim // 2):
        i = 2 * k
        cov[i, i + 1] = cov[i + 1, i] = rhos[k]
    return cov


def spaceship(dim: int = 50, rho_first: float = 0.9, rho_rest: float = 0.5) -> MixtureTarget:
    """Two correlated Gaussians sharing mean (1, 1, 0, ...) with crossed first blocks."""
    if dim < 2:
        raise ValueError("spaceship needs at least two dimensions")
    mu = np.zeros(dim)
    mu[:2] = 1.0
    nblocks = dim // 2
    rest = [rho_rest] * (nblocks - 1)
    c1 = GaussianTarget(mu, block_correlation(dim, [rho_first] + rest))
    c2 = GaussianTarget(mu, block_correlation(dim, [-rho_first] + rest))
    return MixtureTarget([0.5, 0.5], [c1, c2])


def banded_covariance(dim: int, band: int, rho: float = 0.5) -> np.ndarray:
    """``rho ** |i - j|`` for ``|i - j| <= band``, zero beyond."""
    idx = np.arange(dim)
    lag = np.abs(idx[:, None] - idx[None, :])
    return np.where(lag <= band, rho ** lag, 0.0)


def banded_gaussian(dim: int, band: int, rho: float = 0.5) -> GaussianTarget:
    return GaussianTarget(np.zeros(dim), banded_covariance(dim, band, rho))


class BandedGaussian(GaussianTarget):
    """Zero-mean Gaussian whose factor graph is declared as the band structure."""

    def __init__(self, dim: int, band: int, rho: float = 0.5):
        super().__init__(np.zeros(dim), banded_covariance(dim, band, rho))
        self.band = band
        self._graph = build_banded_graph(dim, band)


# -- conditioned diffusion ---------------------------------------------------

def drift(u):
    u = np.asarray(u, dtype=float)
    u2 = u * u
    return 5.0 * u * (1.0 - u2) / (1.0 + u2)


def drift_prime(u):
    u = np.asarray(u, dtype=float)
    u2 = u * u
    return 5.0 * (1.0 - 4.0 * u2 - u2 * u2) / (1.0 + u2) ** 2


def simulate_diffusion(increments, dt: float) -> np.ndarray:
    """Forward Euler path ``u_{i+1} = u_i + drift(u_i) dt + dx_i`` from ``u_0 = 0``.

    ``increments`` may be ``(n_t,)`` or a batch ``(m, n_t)``; the returned path
    excludes the initial zero and has the same shape.
    """
    inc = np.asarray(increments, dtype=float)
    if inc.ndim not in (1, 2):
        raise ValueError("increments must be a vector or a batch of vectors")
    if not dt > 0:
        raise ValueError("time step must be positive")
    X = np.atleast_2d(inc)
    out = np.empty_like(X)
    u = np.zeros(X.shape[0])
    for i in range(X.shape[1]):
        u = u + drift(u) * dt + X[:, i]
        out[:, i] = u
    return out[0] if inc.ndim == 1 else out


class DiffusionPosterior(TargetModel):
    """Posterior over Brownian increments given noisy observations of the path.

    The latent vector holds the ``n_steps`` increments, each a priori
    N(0, dt).  Observation ``j`` measures the path at time ``obs_times[j]``.
    """

    def __init__(self, observations, sigma: float = 0.1, n_steps: int = 50, obs_times=None):
        z = np.asarray(observations, dtype=float)
        if obs_times is None:
            obs_times = 0.02 * np.arange(1, z.size + 1)
        obs_times = np.asarray(obs_times, dtype=float)
        if obs_times.shape != z.shape:
            raise ValueError("one observation time per observation")
        if not sigma > 0 or n_steps < 1:
            raise ValueError("sigma and n_steps must be positive")
        self.dt = 1.0 / n_steps
        idx = np.rint(obs_times / self.dt).astype(int) - 1
        if np.any(idx < 0) or np.any(idx >= n_steps) or not np.allclose((idx + 1) * self.dt, obs_times):
            raise ValueError("observation times must lie on the Euler grid")
        self.observations = z
        self.obs_times = obs_times
        self.obs_index = idx
        self.sigma = float(sigma)
        self.n_steps = n_steps
        self.dim = n_steps
        self.times = self.dt * np.arange(1, n_steps + 1)

    def path(self, X):
        return simulate_diffusion(X, self.dt)

    def _log_density(self, X):
        U = simulate_diffusion(X, self.dt)
        resid = self.observations - U[:, self.obs_index]
        prior = -0.5 * np.sum(X * X, axis=1) / self.dt
        return prior - 0.5 * np.sum(resid * resid, axis=1) / self.sigma ** 2

    def _score(self, X):
        m, n = X.shape
        U = simulate_diffusion(X, self.dt)
        # dL/du_i from the observations
        G = np.zeros((m, n))
        G[:, self.obs_index] += (self.observations - U[:, self.obs_index]) / self.sigma ** 2
        # reverse-mode sweep: u_{i+1} = u_i + drift(u_i) dt + x_i
        lam = np.zeros((m, n))
        adj = G[:, n - 1].copy()
        lam[:, n - 1] = adj
        for i in range(n - 2, -1, -1):
            adj = G[:, i] + adj * (1.0 + drift_prime(U[:, i]) * self.dt)
            lam[:, i] = adj
        return lam - X / self.dt


def make_diffusion_problem(seed, sigma: float = 0.1, n_steps: int = 50, n_obs: int = 50):
    """Draw a forcing path from the prior and noisy observations of its solution.

    Returns ``(target, true_increments, true_path)``.
    """
    rng = np.random.default_rng(seed)
    dt = 1.0 / n_steps
    inc = rng.standard_normal(n_steps) * math.sqrt(dt)
    path = simulate_diffusion(inc, dt)
    obs_times = np.arange(1, n_obs + 1) / n_obs
    idx = np.rint(obs_times / dt).astype(int) - 1
    z = path[idx] + sigma * rng.standard_normal(n_obs)
    return DiffusionPosterior(z, sigma=sigma, n_steps=n_steps, obs_times=obs_times), inc, path


# -- logistic regression -----------------------------------------------------

class LogisticPosterior(TargetModel):
    """Bayesian logistic regression with an isotropic Gaussian prior on the weights."""

    def __init__(self, features, labels, prior_var: float = 1.0):
        A = np.asarray(features, dtype=float)
        y = np.asarray(labels, dtype=float)
        if A.ndim != 2 or y.shape != (A.shape[0],):
            raise ValueError("features must be (n, D) with one label per row")
        if not np.all(np.isfinite(A)):
            raise ValueError("non-finite feature values")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if not prior_var > 0:
            raise ValueError("prior variance must be positive")
        self.features = A
        self.labels = y
        self.prior_var = float(prior_var)
        self.dim = A.shape[1]

    def _margins(self, W):
        return (W @ self.features.T) * self.labels

    def _log_density(self, W):
        z = self._margins(W)
        return -np.sum(np.logaddexp(0.0, -z), axis=1) - 0.5 * np.sum(W * W, axis=1) / self.prior_var

    def _score(self, W):
        z = self._margins(W)
        return (expit(-z) * self.labels) @ self.features - W / self.prior_var

    def hessian(self, w) -> np.ndarray:
        z = self.features @ w
        p = expit(z)
        return -(self.features.T * (p * (1 - p))) @ self.features - np.eye(self.dim) / self.prior_var
