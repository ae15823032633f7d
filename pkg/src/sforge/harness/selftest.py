"""Fast oracle checks runnable from an installed package (``sforge selftest``)."""
from __future__ import annotations

import itertools
import math

import numpy as np

from sforge import _backend, _pykernels, analysis, kernels
from sforge.dynamics import mp_svgd_direction, svgd_direction
from sforge.structure import build_banded_graph, select_partition
from sforge.targets import DiffusionPosterior, GaussianTarget, LogisticPosterior, spaceship


def _fd_score(target, x, eps=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (target.log_density(x + e) - target.log_density(x - e)) / (2 * eps)
    return g


def check_kernel_values():
    rbf = kernels.KernelSpec("rbf")
    imq = kernels.KernelSpec("imq")
    assert abs(kernels.evaluate(rbf, [0.0], [2.0], h=2.0) - math.exp(-1)) < 1e-15
    assert abs(kernels.evaluate(imq, [0.0], [math.sqrt(2)], h=1.0) - 1 / math.sqrt(2)) < 1e-15
    assert abs(kernels.grad_x(rbf, [0.0], [2.0], h=2.0)[0] - math.exp(-1)) < 1e-15
    assert abs(kernels.median_bandwidth([[0.0], [1.0], [3.0]]) - 4 / math.log(3)) < 1e-12


def check_scores():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(50) * 0.3
    A = rng.standard_normal((40, 6))
    y = np.where(rng.random(40) < 0.5, 1.0, -1.0)
    targets = [GaussianTarget.standard(4), spaceship(6), DiffusionPosterior(z), LogisticPosterior(A, y)]
    for t in targets:
        for _ in range(5):
            x = rng.standard_normal(t.dim) * 0.2
            fd = _fd_score(t, x)
            an = t.score(x)
            assert np.linalg.norm(an - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd)), type(t).__name__


def check_energy_distance():
    rng = np.random.default_rng(1)
    X, Y = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    d = lambda a, b: float(np.sqrt(np.sum((a - b) ** 2)))
    xy = sum(d(a, b) for a in X for b in Y) / 16
    xx = sum(d(a, b) for a in X for b in X) / 16
    yy = sum(d(a, b) for a in Y for b in Y) / 16
    assert abs(analysis.energy_distance(X, Y) - (2 * xy - xx - yy)) < 1e-12


def check_partitions():
    rng = np.random.default_rng(2)
    for _ in range(10):
        X = rng.standard_normal((12, 6)) * rng.uniform(0.1, 3.0, 6)
        Z = X - X.mean(axis=0)
        for d in range(6):
            others = [i for i in range(6) if i != d]
            best = min(itertools.combinations(others, 2), key=lambda s: np.trace(Z[:, s] @ Z[:, s].T))
            assert select_partition(X, d, 2).gamma == tuple(sorted(best))


def check_mp_complete_graph():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((15, 5))
    t = GaussianTarget.standard(5)
    k = kernels.KernelSpec()
    assert np.array_equal(mp_svgd_direction(X, t, build_banded_graph(5, 4), k), svgd_direction(X, t, k))


def check_gamma():
    assert analysis.gamma_factor(16.0, 2) == 2.0
    assert abs(analysis.gamma_factor(1e6, 8) - 6.0) < 1e-12
    assert analysis.gamma_factor(0.5, 1) == 0.0


def check_backends_agree():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((20, 4))
    S = -X
    XT, ST = np.ascontiguousarray(X.T), np.ascontiguousarray(S.T)
    cols = np.arange(4, dtype=np.int64)
    sq_c = _backend.sqdist_cols(XT, cols)
    sq_p = _pykernels.sqdist_cols(XT, cols)
    assert np.allclose(sq_c, sq_p, rtol=1e-12, atol=1e-12)
    for fam in (0, 1):
        a = _backend.stein_phi(sq_p, XT, ST, cols, 0.7, fam)
        b = _pykernels.stein_phi(sq_p, XT, ST, cols, 0.7, fam)
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


CHECKS = [
    ("kernel closed forms", check_kernel_values),
    ("scores vs finite differences", check_scores),
    ("energy distance vs double loop", check_energy_distance),
    ("partition vs exhaustive min-trace", check_partitions),
    ("MP on complete graph equals SVGD", check_mp_complete_graph),
    ("gamma factor values", check_gamma),
    (f"compiled and Python kernels agree ({_backend.NAME})", check_backends_agree),
]


def run_all(emit=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
            emit(f"PASS  {name}")
        except AssertionError as exc:
            ok = False
            emit(f"FAIL  {name} {exc}")
    return ok
