import math

import numpy as np
import pytest

from sforge import kernels
from sforge.dynamics import (
    DivergenceError, Method, RunConfig, StepSchedule, aump_stage1_direction, aump_stage2_direction,
    mp_svgd_direction, run, svgd_direction,
)
from sforge.kernels import KernelSpec
from sforge.structure import FactorGraph, build_banded_graph, select_partitions
from sforge.targets import BandedGaussian, GaussianTarget, spaceship


def naive_phi(X, S, kcols, ucols, spec):
    """Double loop over particles, kernel on ``kcols``, output on ``ucols``."""
    Xk = X[:, list(kcols)]
    h = spec.resolve(Xk)
    m = X.shape[0]
    out = np.zeros((m, len(ucols)))
    pos = {c: i for i, c in enumerate(kcols)}
    for i in range(m):
        for j in range(m):
            k = kernels.evaluate(spec, Xk[j], Xk[i], h=h)
            g = kernels.grad_x(spec, Xk[j], Xk[i], h=h)
            for a, c in enumerate(ucols):
                out[i, a] += k * S[j, c] + (g[pos[c]] if c in pos else 0.0)
    return out / m


def test_single_particle_direction_is_score():
    t = GaussianTarget(np.array([1.0, -2.0, 0.5]), np.eye(3))
    x = np.array([[0.3, 0.1, -0.4]])
    assert np.array_equal(svgd_direction(x, t, KernelSpec()), t.score(x))


def test_two_particle_hand_value():
    t = GaussianTarget.standard(1)
    X = np.array([[0.0], [1.0]])
    k = math.exp(-0.5)
    phi = svgd_direction(X, t, KernelSpec("rbf", 1.0))
    assert phi[0, 0] == pytest.approx(-k, abs=1e-15)
    assert phi[1, 0] == pytest.approx(0.5 * (k - 1.0), abs=1e-15)
    assert phi[1, 0] == pytest.approx(-0.196735, abs=1e-6)


def test_symmetric_pair_moves_symmetrically():
    t = GaussianTarget.standard(3)
    a = np.array([0.4, -1.0, 2.0])
    phi = svgd_direction(np.stack([-a, a]), t, KernelSpec())
    assert np.allclose(phi[0], -phi[1], atol=1e-15)


@pytest.mark.parametrize("family", ["rbf", "imq"])
@pytest.mark.parametrize("h", [None, 0.7])
def test_svgd_matches_double_loop(rng, family, h):
    t = spaceship(4)
    X = rng.standard_normal((9, 4))
    spec = KernelSpec(family, h)
    ref = naive_phi(X, t.score(X), range(4), range(4), spec)
    assert np.allclose(svgd_direction(X, t, spec), ref, rtol=1e-12, atol=1e-14)


def test_mp_complete_graph_is_svgd_bitwise(rng):
    t = GaussianTarget.standard(5)
    X = rng.standard_normal((20, 5))
    g = build_banded_graph(5, 4)
    assert np.array_equal(mp_svgd_direction(X, t, g, KernelSpec()), svgd_direction(X, t, KernelSpec()))


def test_mp_matches_double_loop(rng):
    t = BandedGaussian(6, 1)
    X = rng.standard_normal((11, 6))
    S = t.score(X)
    phi = mp_svgd_direction(X, t, t.factor_graph, KernelSpec())
    for d in range(6):
        ref = naive_phi(X, S, t.factor_graph.closed_blanket(d), (d,), KernelSpec())
        assert np.allclose(phi[:, d], ref[:, 0], rtol=1e-12, atol=1e-14)


def test_singleton_graph_columns_independent(rng):
    t = GaussianTarget.standard(4)
    g = FactorGraph(4, tuple((i,) for i in range(4)))
    X = rng.standard_normal((15, 4))
    base = mp_svgd_direction(X, t, g, KernelSpec())
    Y = X.copy()
    Y[:, 1:] = rng.standard_normal((15, 3)) * 5
    assert np.allclose(mp_svgd_direction(Y, t, g, KernelSpec())[:, 0], base[:, 0], rtol=1e-14, atol=1e-15)
    one = svgd_direction(X[:, :1], GaussianTarget.standard(1), KernelSpec())
    assert np.allclose(base[:, :1], one, rtol=1e-14, atol=1e-15)


def test_stage1_matches_double_loop(rng):
    t = spaceship(5)
    X = rng.standard_normal((10, 5)) * [1, 2, 0.5, 3, 1.5]
    S = t.score(X)
    for p in select_partitions(X, 2):
        kcols = tuple(i for i in range(5) if i != p.d)
        ref = naive_phi(X, S, kcols, p.gamma, KernelSpec())
        assert np.allclose(aump_stage1_direction(X, t, p, KernelSpec()), ref, rtol=1e-12, atol=1e-14)


def test_stage2_matches_double_loop(rng):
    t = spaceship(5)
    X = rng.standard_normal((10, 5))
    S = t.score(X)
    for cluster in ((0, 3), (1, 2, 4), (2,)):
        d = cluster[0]
        ref = naive_phi(X, S, cluster, (d,), KernelSpec("imq"))
        assert np.allclose(aump_stage2_direction(X, t, d, cluster, KernelSpec("imq")), ref[:, 0],
                           rtol=1e-12, atol=1e-14)


def test_stage2_full_cluster_is_svgd_column(rng):
    t = spaceship(4)
    X = rng.standard_normal((12, 4))
    full = svgd_direction(X, t, KernelSpec())
    for d in range(4):
        assert np.allclose(aump_stage2_direction(X, t, d, range(4), KernelSpec()), full[:, d],
                           rtol=1e-13, atol=1e-15)
    with pytest.raises(ValueError):
        aump_stage2_direction(X, t, 0, (1, 2), KernelSpec())


def _reference_iteration(X, t, r, spec, eps):
    """One Jacobi AUMP iteration with a fixed step, from the public directions."""
    X = X.copy()
    m, D = X.shape
    parts = select_partitions(X, r)
    delta = np.zeros((m, D))
    count = np.zeros(D)
    S = t.score(X)
    for p in parts:
        delta[:, list(p.gamma)] += aump_stage1_direction(X, t, p, spec, S)
        count[list(p.gamma)] += 1
    hit = count > 0
    X[:, hit] += eps * delta[:, hit] / count[hit]
    for which in ("s", "gamma"):
        S = t.score(X)
        step = np.column_stack([aump_stage2_direction(X, t, p.d, getattr(p, which) + (p.d,), spec, S)
                                for p in parts])
        X += eps * step
    return X


def test_aump_iteration_matches_reference(rng):
    t = spaceship(5)
    X0 = rng.standard_normal((14, 5))
    cfg = RunConfig(iterations=1, init=X0, step_mode="fixed", step=0.05, r=2)
    got = run("aump_svgd", t, cfg).final
    assert np.allclose(got, _reference_iteration(X0, t, 2, KernelSpec(), 0.05), rtol=1e-12, atol=1e-13)


def test_sequential_variant_runs_and_differs(rng):
    t = spaceship(5)
    X0 = rng.standard_normal((14, 5))
    a = run("aump_svgd", t, RunConfig(iterations=3, init=X0, r=2)).final
    b = run("aump_svgd", t, RunConfig(iterations=3, init=X0, r=2, sequential=True)).final
    assert np.all(np.isfinite(b)) and not np.array_equal(a, b)


def test_single_particle_finds_mode():
    mu = np.array([1.0, -2.0, 0.5])
    t = GaussianTarget(mu, np.eye(3))
    tr = run("svgd", t, RunConfig(particles=1, iterations=500, step_mode="fixed", step=0.1))
    assert np.abs(tr.final[0] - mu).max() < 1e-3


@pytest.mark.parametrize("method", ["svgd", "mp_svgd", "aump_svgd"])
def test_bitwise_determinism(method):
    t = BandedGaussian(6, 1)
    cfg = RunConfig(particles=20, iterations=30, seed=7, r=2, step=1.0)
    assert np.array_equal(run(method, t, cfg).final, run(method, t, cfg).final)


def test_one_dimensional_variance():
    tr = run("svgd", GaussianTarget.standard(1), RunConfig(particles=100, iterations=2000, step=1.0))
    var = tr.final[:, 0].var()
    assert 0.85 <= var <= 1.1
    assert abs(tr.final.mean()) < 0.05


@pytest.mark.parametrize("method", ["svgd", "aump_svgd"])
def test_translation_equivariance(method, rng):
    c = rng.standard_normal(4) * 3
    X0 = rng.standard_normal((10, 4))
    base = dict(iterations=20, step_mode="fixed", step=0.1, kernel=KernelSpec("rbf", 0.8), r=2)
    a = run(method, GaussianTarget.standard(4), RunConfig(init=X0, **base)).final
    b = run(method, GaussianTarget(c, np.eye(4)), RunConfig(init=X0 + c, **base)).final
    assert np.allclose(b - c, a, rtol=0, atol=1e-10)


def test_snapshots_schedule():
    tr = run("svgd", GaussianTarget.standard(2), RunConfig(particles=5, iterations=25, snapshot_every=10))
    assert [s.iteration for s in tr.snapshots] == [0, 10, 20, 25]
    assert tr.snapshots[-1].cov.shape == (2, 2)


def test_adagrad_accumulates():
    sch = StepSchedule("adagrad", step=1.0, fudge=0.0)
    d = np.full((2, 2), 2.0)
    assert np.allclose(sch(d), 1.0)
    assert np.allclose(sch(d), 2.0 / math.sqrt(8.0))
    sch.reset()
    assert np.allclose(sch(d), 1.0)


def test_adagrad_partial_columns():
    sch = StepSchedule("adagrad", step=1.0, fudge=0.0)
    with pytest.raises(ValueError):
        sch(np.ones((2, 1)), [0])
    sch.ensure((2, 3))
    sch(np.ones((2, 1)), [1])
    assert np.array_equal(sch._acc, [[0, 1, 0], [0, 1, 0]])


def test_fixed_step_and_validation():
    assert np.array_equal(StepSchedule("fixed", 0.5)(np.ones(3)), np.full(3, 0.5))
    with pytest.raises(ValueError):
        StepSchedule("rmsprop")
    with pytest.raises(ValueError):
        StepSchedule("fixed", 0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_with_iteration():
    cfg = RunConfig(particles=5, iterations=500, step_mode="fixed", step=1e6, kernel=KernelSpec("rbf", 1.0))
    with pytest.raises(DivergenceError) as info:
        run("svgd", GaussianTarget.standard(2), cfg)
    assert 1 <= info.value.iteration <= 500


def test_config_errors():
    t = GaussianTarget.standard(3)
    for r in (None, 0, 3):
        with pytest.raises(ValueError):
            run("aump_svgd", t, RunConfig(particles=4, iterations=1, r=r))
    with pytest.raises(ValueError):
        run("mp_svgd", spaceship(3), RunConfig(particles=4, iterations=1))
    with pytest.raises(ValueError):
        run("svgd", t, RunConfig(particles=4, iterations=-1))
    with pytest.raises(ValueError):
        Method.parse("langevin")
    assert Method.parse("AUMP-SVGD") is Method.AUMP_SVGD


def test_stage1_full_gamma_restriction_identity(rng):
    from sforge.structure import Partition

    t = spaceship(4)
    X = rng.standard_normal((9, 4))
    p = Partition(0, (1, 2, 3), ())
    ref = naive_phi(X, t.score(X), (1, 2, 3), (1, 2, 3), KernelSpec())
    assert np.allclose(aump_stage1_direction(X, t, p, KernelSpec()), ref, rtol=1e-12, atol=1e-14)


def test_fixed_point_residual():
    t = GaussianTarget.standard(10)
    X = run("svgd", t, RunConfig(particles=100, iterations=5000, step=1.0, init_mean=0.0)).final
    assert np.abs(svgd_direction(X, t, KernelSpec())).max() < 1e-4


@pytest.mark.parametrize("method", ["svgd", "mp_svgd", "aump_svgd"])
def test_no_center_drift_symmetric_init(method, rng):
    half = rng.standard_normal((10, 6))
    X0 = np.vstack([half, -half])
    # a small fixed step keeps the flow contracting, so round-off is not amplified
    cfg = RunConfig(init=X0, iterations=50, r=2, step_mode="fixed", step=0.05)
    X = run(method, BandedGaussian(6, 2), cfg).final
    assert np.abs(X.mean(axis=0)).max() <= 1e-8


def test_aump_cost_near_linear_in_dim():
    import time

    def per_iter(D):
        t = GaussianTarget.standard(D)
        cfg = RunConfig(particles=60, iterations=5, r=3)
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            run("aump_svgd", t, cfg)
            best = min(best, time.perf_counter() - t0)
        return best

    ratio = per_iter(40) / per_iter(10)
    # linear growth gives about 4, quadratic about 16
    assert ratio < 9, ratio
