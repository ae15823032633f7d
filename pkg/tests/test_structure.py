import itertools

import numpy as np
import pytest

from sforge.structure import (
    FactorGraph, Partition, build_banded_graph, column_spread, graph_from_precision,
    markov_blanket, partition_from_order, select_partition, select_partitions,
)


def test_blanket_union():
    g = FactorGraph(3, ((0, 1), (1, 2)))
    assert markov_blanket(g, 1) == (0, 2)
    assert markov_blanket(g, 0) == (1,)


def test_singleton_blanket_empty():
    g = FactorGraph(3, ((0, 1), (2,)))
    assert markov_blanket(g, 2) == ()


def test_chain_interior():
    D = 7
    g = FactorGraph(D, tuple((i, i + 1) for i in range(D - 1)))
    for d in range(1, D - 1):
        assert markov_blanket(g, d) == (d - 1, d + 1)


def test_blanket_out_of_range():
    g = build_banded_graph(4, 1)
    with pytest.raises(IndexError):
        g.blanket(4)
    with pytest.raises(IndexError):
        g.blanket(-1)


def test_graph_validation():
    with pytest.raises(ValueError):
        FactorGraph(3, ((0, 1),))  # coordinate 2 uncovered
    with pytest.raises(ValueError):
        FactorGraph(2, ((0, 2),))
    with pytest.raises(ValueError):
        FactorGraph(2, ((0, 1), ()))


def test_banded_graph():
    assert build_banded_graph(3, 1).factors == ((0, 1), (1, 2))
    g0 = build_banded_graph(5, 0)
    assert all(g0.blanket(d) == () for d in range(5))
    full = build_banded_graph(5, 4)
    for d in range(5):
        assert full.blanket(d) == tuple(i for i in range(5) if i != d)
    with pytest.raises(ValueError):
        build_banded_graph(5, 5)


def test_blanket_symmetry(rng):
    for _ in range(20):
        D = int(rng.integers(2, 9))
        pairs = [(i, j) for i in range(D) for j in range(i + 1, D) if rng.random() < 0.4]
        g = FactorGraph(D, tuple(pairs) + tuple((i,) for i in range(D)))
        for d in range(D):
            for e in g.blanket(d):
                assert d in g.blanket(e)


def test_json_round_trip():
    g = build_banded_graph(6, 2)
    assert FactorGraph.from_json(g.to_json()) == g
    with pytest.raises(ValueError):
        FactorGraph.from_json('{"a": 1}')


def test_graph_from_precision():
    P = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    g = graph_from_precision(P)
    assert g.blanket(0) == (1,) and g.blanket(1) == (0, 2)


def _with_norms(norms, m=10, seed=0):
    """Ensemble whose centred column norms are exactly ``norms``."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((m, len(norms)))
    Z -= Z.mean(axis=0)
    Z /= np.linalg.norm(Z, axis=0)
    return Z * np.asarray(norms) + 5.0


def test_partition_smallest_norm():
    X = _with_norms([3.0, 1.0, 2.0])
    assert np.allclose(column_spread(X), [3, 1, 2])
    p = select_partition(X, 0, 1)
    assert p.gamma == (1,) and p.s == (2,)


def test_partition_tie_breaks_to_lower_index():
    X = np.zeros((4, 3))
    X[:, 0] = [1, -1, 1, -1]
    X[:, 1] = [1, 1, -1, -1]
    X[:, 2] = [5, -5, 5, -5]
    assert select_partition(X, 2, 1).gamma == (0,)


def test_partition_uncentered_mode():
    X = _with_norms([1.0, 1.5, 2.0])
    X[:, 0] += 100.0
    assert select_partition(X, 2, 1, centered=True).gamma == (0,)
    assert select_partition(X, 2, 1, centered=False).gamma == (1,)


@pytest.mark.parametrize("D", range(2, 9))
def test_partition_equals_exhaustive_min_trace(D):
    rng = np.random.default_rng(D)
    for _ in range(50):
        X = rng.standard_normal((9, D)) * rng.uniform(0.1, 3.0, D) + rng.standard_normal(D)
        Z = X - X.mean(axis=0)
        for r in range(1, D):
            for d in range(D):
                others = [i for i in range(D) if i != d]
                best = min(itertools.combinations(others, r),
                           key=lambda s: (np.trace(Z[:, s] @ Z[:, s].T), s))
                p = select_partition(X, d, r)
                assert p.gamma == tuple(best)
                p.check(D)


def test_partition_row_permutation_invariant(rng):
    X = rng.standard_normal((15, 6)) * np.arange(1, 7)
    perm = rng.permutation(15)
    for d in range(6):
        assert select_partition(X, d, 2) == select_partition(X[perm], d, 2)


def test_partition_invariants_random(rng):
    for _ in range(30):
        D = int(rng.integers(2, 10))
        X = rng.standard_normal((8, D))
        r = int(rng.integers(1, D))
        for p in select_partitions(X, r):
            g, s = set(p.gamma), set(p.s)
            assert not g & s and p.d not in g | s
            assert g | s | {p.d} == set(range(D)) and len(g) == r


def test_partition_r_out_of_range():
    X = np.random.default_rng(0).standard_normal((5, 4))
    for r in (0, 4):
        with pytest.raises(ValueError):
            select_partition(X, 0, r)
    with pytest.raises(IndexError):
        partition_from_order([0, 1, 2], 3, 1)


def test_partition_check_rejects_overlap():
    with pytest.raises(ValueError):
        Partition(0, (1,), (1, 2)).check(3)
