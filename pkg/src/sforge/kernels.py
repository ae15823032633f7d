"""Positive-definite kernels for Stein updates.

Two radial families are supported, both written in terms of the squared
distance ``r2 = ||x - y||^2`` and a bandwidth ``h``::

    RBF:  k = exp(-r2 / (2h))
    IMQ:  k = 1 / sqrt(1 + r2 / (2h))

Gradients are taken with respect to the first argument.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from sforge import _backend

FALLBACK_BANDWIDTH = 1.0


class Family(enum.IntEnum):
    RBF = 0
    IMQ = 1


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus either a fixed bandwidth or the median rule.

    ``bandwidth=None`` selects the median heuristic, recomputed from whatever
    point set the kernel is resolved against.
    """

    family: Family = Family.RBF
    bandwidth: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(_parse_family(self.family)))
        if self.bandwidth is not None:
            h = float(self.bandwidth)
            if not (h > 0 and math.isfinite(h)):
                raise ValueError(f"bandwidth must be positive and finite, got {self.bandwidth!r}")
            object.__setattr__(self, "bandwidth", h)

    @property
    def is_median(self) -> bool:
        return self.bandwidth is None

    def resolve(self, points=None) -> float:
        """Concrete bandwidth, using ``points`` when the median rule is active."""
        if self.bandwidth is not None:
            return self.bandwidth
        if points is None:
            raise ValueError("median bandwidth needs a point set to resolve against")
        return median_bandwidth(points)

    def with_bandwidth(self, h: float) -> "KernelSpec":
        return KernelSpec(self.family, h)


def _parse_family(family) -> int:
    if isinstance(family, str):
        try:
            return Family[family.upper()]
        except KeyError:
            raise ValueError(f"unknown kernel family {family!r}") from None
    return int(family)


def _check_pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite kernel input")
    return x, y


def _h_for(spec: KernelSpec, h: float | None) -> float:
    if h is not None:
        return float(h)
    if spec.bandwidth is None:
        raise ValueError("kernel bandwidth is unresolved; pass h or use a fixed bandwidth")
    return spec.bandwidth


def from_sq(family: Family, r2, h: float):
    """Kernel value from squared distance (scalar or array)."""
    if family == Family.RBF:
        return np.exp(-np.asarray(r2) / (2.0 * h))
    return 1.0 / np.sqrt(1.0 + np.asarray(r2) / (2.0 * h))


def evaluate(spec: KernelSpec, x, y, h: float | None = None) -> float:
    x, y = _check_pair(x, y)
    r2 = float(np.dot(x - y, x - y))
    return float(from_sq(spec.family, r2, _h_for(spec, h)))


def grad_x(spec: KernelSpec, x, y, h: float | None = None) -> np.ndarray:
    """Gradient of k(x, y) with respect to ``x``."""
    x, y = _check_pair(x, y)
    h = _h_for(spec, h)
    diff = x - y
    k = from_sq(spec.family, float(np.dot(diff, diff)), h)
    if spec.family == Family.RBF:
        return -(diff / h) * k
    return -(diff / (2.0 * h)) * k ** 3


def gram(spec: KernelSpec, X, h: float | None = None) -> np.ndarray:
    X = _as_points(X)
    if h is None:
        h = spec.resolve(X)
    XT = np.ascontiguousarray(X.T)
    sq = _backend.sqdist_cols(XT, np.arange(X.shape[1]))
    return from_sq(spec.family, sq, h)


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need at least one point")
    return X


def bandwidth_from_sq(sq: np.ndarray) -> float:
    """Median heuristic from a precomputed squared-distance matrix.

    ``h = med^2 / log(max(m, 2))`` where ``med`` is the median distance over
    distinct unordered pairs.
    """
    m = sq.shape[0]
    if m < 2:
        return FALLBACK_BANDWIDTH
    med = float(_backend.median_pairwise(sq))
    if not med > 0:
        return FALLBACK_BANDWIDTH
    return med * med / math.log(max(m, 2))


def median_bandwidth(points) -> float:
    X = _as_points(points)
    if X.shape[0] < 2:
        return FALLBACK_BANDWIDTH
    XT = np.ascontiguousarray(X.T)
    return bandwidth_from_sq(_backend.sqdist_cols(XT, np.arange(X.shape[1])))
