"""Sample-quality metrics and the variance-collapse bounds.

The bound calculators estimate their constants from a finished ensemble and
return a :class:`BoundReport` so every number that went into a bound can be
audited afterwards.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from sforge.kernels import KernelSpec, from_sq, grad_x
from sforge.targets import TargetModel

ALPHA_FLOOR = 1e-3
C0_FLOOR = 1.0 + 1e-9


def _points(X, name="sample") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty (n, D) matrix")
    return X


# -- metrics -----------------------------------------------------------------------

def energy_distance(X, Y) -> float:
    """V-statistic estimate of ``2E|X-Y| - E|X-X'| - E|Y-Y'|``.

    Self-pairs are included (they contribute zero), which keeps the estimate
    non-negative up to round-off.
    """
    X = _points(X)
    Y = _points(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    xy = cdist(X, Y).mean()
    xx = cdist(X, X).mean()
    yy = cdist(Y, Y).mean()
    return float(2.0 * xy - xx - yy)


class EnergyReference:
    """Energy distance to a fixed reference sample, caching its self-term."""

    def __init__(self, Y):
        self.Y = _points(Y)
        self._yy = float(cdist(self.Y, self.Y).mean())

    def __call__(self, X) -> float:
        X = _points(X)
        if X.shape[1] != self.Y.shape[1]:
            raise ValueError(f"dimension mismatch: {X.shape[1]} vs {self.Y.shape[1]}")
        return float(2.0 * cdist(X, self.Y).mean() - cdist(X, X).mean() - self._yy)


def empirical_cov(X) -> np.ndarray:
    X = _points(X, "ensemble")
    Z = X - X.mean(axis=0)
    return Z.T @ Z / X.shape[0]


def cov_error(X, sigma) -> float:
    """Spectral norm of the (1/m, mean-centred) ensemble covariance minus ``sigma``."""
    X = _points(X, "ensemble")
    if X.shape[0] < 2:
        raise ValueError("covariance error needs at least two particles")
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape != (X.shape[1], X.shape[1]):
        raise ValueError("covariance shape does not match the ensemble")
    return spectral_norm(empirical_cov(X) - sigma)


def spectral_norm(A) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if np.allclose(A, A.T, rtol=0.0, atol=0.0):
        return float(np.max(np.abs(np.linalg.eigvalsh(A))))
    return float(np.linalg.norm(A, 2))


@dataclass(frozen=True)
class MetricRecord:
    iteration: int
    energy_distance: float | None
    cov_error: float | None

    def __post_init__(self):
        for name in ("energy_distance", "cov_error"):
            v = getattr(self, name)
            # energy distance can dip below zero by round-off only
            if v is not None and v < -1e-12:
                raise ValueError(f"{name} must be non-negative, got {v}")


# -- bound calculators -------------------------------------------------------------------

def gamma_factor(alpha: float, m: int) -> float:
    """``(log m / log 2) * max(2, 32 log m / (alpha log 2))``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if m < 1:
        raise ValueError("m must be at least 1")
    lm = math.log(m)
    l2 = math.log(2.0)
    return (lm / l2) * max(2.0, 32.0 * lm / (alpha * l2))


@dataclass(frozen=True)
class BoundReport:
    """Constants and values of both variance-collapse bounds for one ensemble.

    Fields for the bound that was not computed are ``None``.
    """

    m: int
    dim: int
    h: float
    trace_sigma: float
    trace_sigma_m: float
    M: float
    c: float
    c0: float
    K: float
    prop1_bound: float
    max_norm: float
    max_norm_sq: float
    alpha: float | None = None
    v2: float | None = None
    gamma: float | None = None
    prop2_bound: float | None = None
    cov_err: float | None = None

    @property
    def prop2_bound_sq(self) -> float | None:
        return None if self.prop2_bound is None else self.prop2_bound ** 2

    @property
    def cov_err_sq(self) -> float | None:
        return None if self.cov_err is None else self.cov_err ** 2

    def as_dict(self) -> dict:
        d = asdict(self)
        d["prop2_bound_sq"] = self.prop2_bound_sq
        d["cov_err_sq"] = self.cov_err_sq
        return d


def rbf_lipschitz(h: float) -> float:
    """``sup_r |d/dr exp(-r^2/(2h))| / 2 = e^{-1/2} / (2 sqrt(h))``."""
    return math.exp(-0.5) / (2.0 * math.sqrt(h))


def prop1_bound(X, h: float, trace_sigma: float) -> BoundReport:
    """Particle-norm bound ``K * sqrt(tr Sigma)`` with ``K = 2M/c + 1``.

    ``c0`` is estimated as the largest squared deviation from the particle
    centre relative to ``tr(Sigma_m)``, clamped into ``(1, m]``.  In the
    mean-field limit this is exactly the quantity the constant has to dominate.
    """
    X = _points(X, "ensemble")
    m, D = X.shape
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if not trace_sigma > 0:
        raise ValueError("target covariance trace must be positive")
    norms_sq = np.einsum("ij,ij->i", X, X)
    max_sq = float(norms_sq.max())
    if m == 1:
        # a single particle has no spread; the bound degenerates to K = 1
        return BoundReport(1, D, float(h), float(trace_sigma), 0.0, rbf_lipschitz(h), math.inf,
                           C0_FLOOR, 1.0, math.sqrt(trace_sigma), math.sqrt(max_sq), max_sq)
    Z = X - X.mean(axis=0)
    dev_sq = np.einsum("ij,ij->i", Z, Z)
    tr_m = float(dev_sq.sum() / m)
    if not tr_m > 0:
        raise ValueError("collapsed ensemble: tr(Sigma_m) = 0")
    c0 = min(max(float(dev_sq.max()) / tr_m, C0_FLOOR), float(m))
    M = rbf_lipschitz(h)
    c = (2.0 / h) * math.exp(-c0 * tr_m / h)
    K = 2.0 * M / c + 1.0 if c > 0 else math.inf
    return BoundReport(m, D, float(h), float(trace_sigma), tr_m, M, c, c0, K,
                       K * math.sqrt(trace_sigma), math.sqrt(max_sq), max_sq)


def _window_sizes(m: int) -> list[int]:
    sizes = []
    s = 1
    while s < m:
        sizes.append(s)
        s *= 2
    sizes.append(m)
    return sizes


def variance_proxy(X, sigma) -> float:
    """``sup_N lambda_max((sum_{i in N} X_i)^2) / |N|`` over norm-sorted windows.

    ``X_i = x_i x_i^T - Sigma``; ``N`` ranges over every contiguous window of
    the norm-sorted particles whose size is a power of two or ``m`` itself.
    """
    X = _points(X, "ensemble")
    m, D = X.shape
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    order = np.argsort(np.einsum("ij,ij->i", X, X), kind="stable")
    Xs = X[order]
    outer = Xs[:, :, None] * Xs[:, None, :] - sigma
    prefix = np.zeros((m + 1, D, D))
    np.cumsum(outer, axis=0, out=prefix[1:])
    best = 0.0
    for size in _window_sizes(m):
        W = prefix[size:] - prefix[:-size]
        lam = np.max(np.abs(np.linalg.eigvalsh(W)), axis=1)
        best = max(best, float(np.max(lam * lam)) / size)
    return best


def prop2_formula(v2: float, K: float, trace_sigma: float, alpha: float, m: int, dim: int) -> float:
    if dim < 2:
        raise ValueError("the covariance bound needs D >= 2")
    lD = math.log(dim)
    g = gamma_factor(alpha, m)
    first = 30.0 * math.sqrt(v2) * math.sqrt(lD / m)
    second = (2.0 * K * K * trace_sigma / m) * (4.0 / math.sqrt(alpha) * math.sqrt(lD) + g * lD)
    return first + second


def prop2_bound(X, sigma, alpha: float, prop1: BoundReport) -> BoundReport:
    """Covariance-error bound, extending a :class:`BoundReport` from :func:`prop1_bound`."""
    X = _points(X, "ensemble")
    m, D = X.shape
    if D < 2:
        raise ValueError("the covariance bound needs D >= 2")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    v2 = variance_proxy(X, sigma)
    bound = prop2_formula(v2, prop1.K, float(np.trace(sigma)), alpha, m, D)
    err = cov_error(X, sigma) if m >= 2 else None
    return replace(prop1, alpha=float(alpha), v2=v2, gamma=gamma_factor(alpha, m),
                   prop2_bound=bound, cov_err=err)


def bound_report(X, sigma, h: float, alpha: float | None = None) -> BoundReport:
    """Both bounds for a zero-mean Gaussian target with covariance ``sigma``."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    rep = prop1_bound(X, h, float(np.trace(sigma)))
    if alpha is None:
        return rep
    return prop2_bound(X, sigma, alpha, rep)


# -- pairwise interaction diagnostic ------------------------------------------------------

def interaction_magnitude(X, target: TargetModel, kernel: KernelSpec, n: int, j: int, h: float | None = None) -> float:
    """Norm of the force particle ``j`` exerts in the update of particle ``n``.

    ``|(1/m) [score(x_n) k(x_n, x_j) + grad_1 k(x_n, x_j)]|``.
    """
    X = _points(X, "ensemble")
    m = X.shape[0]
    for idx in (n, j):
        if not 0 <= idx < m:
            raise IndexError(f"particle index {idx} outside [0, {m})")
    if h is None:
        h = kernel.resolve(X)
    xn, xj = X[n], X[j]
    r2 = float(np.dot(xn - xj, xn - xj))
    k = float(from_sq(kernel.family, r2, h))
    force = target.score(xn) * k + grad_x(kernel, xn, xj, h)
    return float(np.linalg.norm(force) / m)


def decay_curve(X, target: TargetModel, kernel: KernelSpec, gaps: Sequence[int]) -> list[tuple[int, float]]:
    """Mean interaction magnitude between norm-sorted particles ``gap`` apart.

    For each gap ``g`` the magnitude is averaged over every pair
    ``(order[i], order[i + g])``.
    """
    X = _points(X, "ensemble")
    m = X.shape[0]
    h = kernel.resolve(X)
    order = np.argsort(np.einsum("ij,ij->i", X, X), kind="stable")
    Xs = X[order]
    S = target.score(Xs)
    out = []
    for g in gaps:
        g = int(g)
        if not 1 <= g < m:
            raise ValueError(f"gap {g} outside [1, {m})")
        a, b = Xs[:-g], Xs[g:]
        diff = a - b
        r2 = np.einsum("ij,ij->i", diff, diff)
        k = from_sq(kernel.family, r2, h)
        if int(kernel.family) == 0:
            gk = -(diff / h) * k[:, None]
        else:
            gk = -(diff / (2.0 * h)) * (k ** 3)[:, None]
        force = S[:-g] * k[:, None] + gk
        out.append((g, float(np.mean(np.linalg.norm(force, axis=1)) / m)))
    return out


class AlphaFit(NamedTuple):
    alpha: float
    degenerate: bool


def estimate_alpha(curve: Sequence[tuple[float, float]]) -> AlphaFit:
    """Decay rate of ``magnitude ~ exp(-alpha (gap - 1))`` by least squares.

    Zero magnitudes are skipped.  When fewer than two usable points remain, or
    the fitted rate falls below the floor, the floor is returned with
    ``degenerate=True``.
    """
    pts = [(float(g), float(v)) for g, v in curve]
    if len(pts) < 2:
        raise ValueError("need at least two (gap, magnitude) points")
    if any(v < 0 or not math.isfinite(v) for _, v in pts):
        raise ValueError("magnitudes must be finite and non-negative")
    pts = [(g, v) for g, v in pts if v > 0]
    if len(pts) < 2:
        return AlphaFit(ALPHA_FLOOR, True)
    x = np.array([g - 1.0 for g, _ in pts])
    y = np.log([v for _, v in pts])
    if np.ptp(x) == 0:
        raise ValueError("gaps must not all be equal")
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    alpha = -slope
    if not alpha > ALPHA_FLOOR:
        return AlphaFit(ALPHA_FLOOR, True)
    return AlphaFit(alpha, False)
