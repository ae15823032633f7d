"""Factor-graph neighbourhoods and coordinate partitions.

MP-SVGD restricts each coordinate's kernel to its Markov blanket in a known
factor graph.  AUMP-SVGD instead splits the remaining coordinates into a
small set ``gamma`` (lowest-spread columns of the ensemble) and the rest
``s``, and needs no graph at all.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class FactorGraph:
    dim: int
    factors: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("graph dimension must be positive")
        factors = tuple(tuple(sorted(set(int(i) for i in f))) for f in self.factors)
        seen = set()
        for f in factors:
            if not f:
                raise ValueError("empty factor")
            for i in f:
                if not 0 <= i < self.dim:
                    raise ValueError(f"factor index {i} outside [0, {self.dim})")
            seen.update(f)
        if len(seen) != self.dim:
            missing = sorted(set(range(self.dim)) - seen)
            raise ValueError(f"coordinates {missing} appear in no factor")
        object.__setattr__(self, "factors", factors)
        blankets = [set() for _ in range(self.dim)]
        for f in factors:
            for i in f:
                blankets[i].update(f)
        for i, b in enumerate(blankets):
            b.discard(i)
        object.__setattr__(self, "_blankets", tuple(tuple(sorted(b)) for b in blankets))

    def blanket(self, d: int) -> tuple[int, ...]:
        if not 0 <= d < self.dim:
            raise IndexError(f"coordinate {d} outside [0, {self.dim})")
        return self._blankets[d]

    def closed_blanket(self, d: int) -> tuple[int, ...]:
        """Blanket plus ``d`` itself, sorted."""
        return tuple(sorted(self.blanket(d) + (d,)))

    def to_json(self) -> str:
        return json.dumps([list(f) for f in self.factors])

    @classmethod
    def from_json(cls, text: str, dim: int | None = None) -> "FactorGraph":
        factors = json.loads(text)
        if not isinstance(factors, list) or not all(isinstance(f, list) for f in factors):
            raise ValueError("factor graph JSON must be a list of integer lists")
        if dim is None:
            dim = 1 + max(max(f) for f in factors if f)
        return cls(dim, tuple(tuple(f) for f in factors))


def markov_blanket(graph: FactorGraph, d: int) -> tuple[int, ...]:
    return graph.blanket(d)


def build_banded_graph(dim: int, band: int) -> FactorGraph:
    """Pairwise factors ``{i, j}`` with ``0 < j - i <= band``.

    ``band == 0`` gives singletons only, so every blanket is empty.
    """
    if not 0 <= band <= max(dim - 1, 0):
        raise ValueError(f"band must lie in [0, {dim - 1}], got {band}")
    if band == 0:
        return FactorGraph(dim, tuple((i,) for i in range(dim)))
    pairs = tuple((i, j) for i in range(dim) for j in range(i + 1, min(dim, i + band + 1)))
    return FactorGraph(dim, pairs)


def graph_from_precision(precision: np.ndarray, tol: float = 0.0) -> FactorGraph:
    """Pairwise Markov structure of a Gaussian: nonzero precision entries."""
    P = np.asarray(precision)
    D = P.shape[0]
    factors = [(i,) for i in range(D)]
    factors += [(i, j) for i in range(D) for j in range(i + 1, D) if abs(P[i, j]) > tol]
    return FactorGraph(D, tuple(factors))


@dataclass(frozen=True)
class Partition:
    """Split of ``{0..D-1} \\ {d}`` into disjoint ``gamma`` and ``s``."""

    d: int
    gamma: tuple[int, ...]
    s: tuple[int, ...]

    def check(self, dim: int) -> None:
        g, s = set(self.gamma), set(self.s)
        if g & s or self.d in g | s or g | s | {self.d} != set(range(dim)):
            raise ValueError(f"invalid partition for d={self.d}: {self}")


def column_spread(X: np.ndarray, centered: bool = True) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if centered:
        X = X - X.mean(axis=0)
    return np.sqrt(np.einsum("ij,ij->j", X, X))


def column_order(X: np.ndarray, centered: bool = True) -> np.ndarray:
    """Coordinates sorted by column 2-norm, ties to the lower index."""
    return np.argsort(column_spread(X, centered), kind="stable")


def partition_from_order(order: Sequence[int], d: int, r: int) -> Partition:
    dim = len(order)
    if not 1 <= r <= dim - 1:
        raise ValueError(f"r must lie in [1, {dim - 1}], got {r}")
    if not 0 <= d < dim:
        raise IndexError(f"coordinate {d} outside [0, {dim})")
    rest = [int(i) for i in order if i != d]
    return Partition(d, tuple(sorted(rest[:r])), tuple(sorted(rest[r:])))


def select_partition(X: np.ndarray, d: int, r: int, centered: bool = True) -> Partition:
    """Choose ``gamma`` as the ``r`` lowest-norm ensemble columns other than ``d``.

    With ``centered=True`` columns are mean-centred first, so the ranking is
    by spread rather than by distance from the origin.
    """
    return partition_from_order(column_order(X, centered), d, r)


def select_partitions(X: np.ndarray, r: int, centered: bool = True) -> list[Partition]:
    """Partitions for every coordinate from a single column ranking."""
    order = column_order(X, centered)
    return [partition_from_order(order, d, r) for d in range(len(order))]


def as_index_array(idx: Iterable[int]) -> np.ndarray:
    return np.asarray(list(idx), dtype=np.int64)
