"""Particle flows: SVGD, message-passing SVGD and augmented MP-SVGD.

All three engines reduce to the same primitive: a kernelized Stein
direction for a subset of "update" coordinates, with the kernel evaluated on
a (possibly different) subset of "kernel" coordinates.  The primitive lives
in the compiled core (``sforge._ckernels``) with a numpy fallback.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from sforge import _backend
from sforge.kernels import FALLBACK_BANDWIDTH, KernelSpec
from sforge.structure import FactorGraph, Partition, column_order, partition_from_order
from sforge.targets import TargetModel

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    SVGD = "svgd"
    MP_SVGD = "mp_svgd"
    AUMP_SVGD = "aump_svgd"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        for m in cls:
            if m.value == key or m.name.lower() == key:
                return m
        raise ValueError(f"unknown method {value!r}")


class DivergenceError(FloatingPointError):
    """A particle or score became non-finite."""

    def __init__(self, iteration: int, what: str = "particles"):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


# -- shared workspace ----------------------------------------------------------

class _Workspace:
    """Transposed ensemble, scores and the full distance matrix for one phase.

    Restricted kernels are requested as ``(kernel_cols, update_cols)`` pairs
    and evaluated together in a single backend call.
    """

    def __init__(self, X: np.ndarray, S: np.ndarray, kernel: KernelSpec):
        self.m, self.D = X.shape
        self.XT = np.ascontiguousarray(X.T)
        self.ST = np.ascontiguousarray(S.T)
        self.kernel = kernel
        self._full = None
        self._all = np.arange(self.D, dtype=np.int64)

    @property
    def full_sq(self) -> np.ndarray:
        if self._full is None:
            self._full = _backend.sqdist_cols(self.XT, self._all)
        return self._full

    def _row(self, cols):
        """Cheapest way to form distances over ``cols``: full, keep, or remove."""
        cols = _idx(cols)
        q = cols.size
        if q == self.D:
            return 2, cols[:0]
        if q <= self.D - q:
            return 1, cols
        mask = np.ones(self.D, dtype=bool)
        mask[cols] = False
        return 0, self._all[mask]

    def batch(self, requests) -> list[np.ndarray]:
        """Stein directions for ``[(kernel_cols, update_cols), ...]``."""
        n = len(requests)
        rows = [self._row(k) for k, _ in requests]
        upd = [_idx(u) for _, u in requests]
        kmax = max(1, max(len(c) for _, c in rows))
        pmax = max(1, max(u.size for u in upd))
        kcols = np.zeros((n, kmax), dtype=np.int64)
        ucols = np.zeros((n, pmax), dtype=np.int64)
        klen = np.empty(n, dtype=np.int64)
        ulen = np.empty(n, dtype=np.int64)
        kmode = np.empty(n, dtype=np.int32)
        for j, ((mode, c), u) in enumerate(zip(rows, upd)):
            kmode[j] = mode
            klen[j] = c.size
            kcols[j, :c.size] = c
            ulen[j] = u.size
            ucols[j, :u.size] = u
        h = -1.0 if self.kernel.bandwidth is None else self.kernel.bandwidth
        out, _ = _backend.batch_phi(self.full_sq, self.XT, self.ST, kcols, klen, kmode,
                                    ucols, ulen, h, int(self.kernel.family), FALLBACK_BANDWIDTH)
        return [out[j, :, :u.size] for j, u in enumerate(upd)]

    def phi(self, kernel_cols, update_cols) -> np.ndarray:
        return self.batch([(kernel_cols, update_cols)])[0]


def _idx(cols) -> np.ndarray:
    return np.sort(np.asarray(cols, dtype=np.int64).reshape(-1))


def _scores(target: TargetModel, X: np.ndarray, iteration: int = -1) -> np.ndarray:
    S = target.score(X)
    if not np.all(np.isfinite(S)):
        raise DivergenceError(iteration, "score")
    return S


def _ensemble(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError("ensemble must be an (m, D) matrix with m, D >= 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("ensemble contains non-finite entries")
    return X


# -- directions ------------------------------------------------------------------

def svgd_direction(X, target: TargetModel, kernel: KernelSpec, scores=None) -> np.ndarray:
    """Global-kernel Stein direction for every particle, shape ``(m, D)``."""
    X = _ensemble(X)
    S = _scores(target, X) if scores is None else scores
    ws = _Workspace(X, S, kernel)
    return ws.phi(ws._all, ws._all)


def mp_svgd_direction(X, target: TargetModel, graph: FactorGraph, kernel: KernelSpec, scores=None) -> np.ndarray:
    """Each coordinate moved by a kernel over its closed Markov blanket."""
    X = _ensemble(X)
    if graph.dim != X.shape[1]:
        raise ValueError("graph dimension does not match the ensemble")
    S = _scores(target, X) if scores is None else scores
    return _mp_phase(_Workspace(X, S, kernel), graph)


def _mp_phase(ws: _Workspace, graph: FactorGraph) -> np.ndarray:
    res = ws.batch([(graph.closed_blanket(d), (d,)) for d in range(ws.D)])
    return np.column_stack([r[:, 0] for r in res])


def _not(d: int, D: int) -> tuple[int, ...]:
    return tuple(i for i in range(D) if i != d)


def aump_stage1_direction(X, target: TargetModel, partition: Partition, kernel: KernelSpec, scores=None) -> np.ndarray:
    """Move the ``gamma`` coordinates with a kernel over every coordinate but ``d``.

    Returns shape ``(m, len(gamma))``, columns in ``partition.gamma`` order.
    """
    X = _ensemble(X)
    partition.check(X.shape[1])
    S = _scores(target, X) if scores is None else scores
    ws = _Workspace(X, S, kernel)
    return ws.phi(_not(partition.d, ws.D), partition.gamma)


def aump_stage2_direction(X, target: TargetModel, d: int, cluster: Sequence[int], kernel: KernelSpec, scores=None) -> np.ndarray:
    """Move coordinate ``d`` with a kernel over ``cluster`` (which contains ``d``)."""
    X = _ensemble(X)
    if d not in cluster:
        raise ValueError("stage-2 cluster must contain d")
    S = _scores(target, X) if scores is None else scores
    return _Workspace(X, S, kernel).phi(cluster, (d,))[:, 0]


# -- step schedules ----------------------------------------------------------------

@dataclass
class StepSchedule:
    """Fixed step or AdaGrad with one accumulator per particle coordinate.

    ``mode="adagrad"`` scales each entry of the update by
    ``step / (fudge + sqrt(sum of its past squared updates))``.
    """

    mode: str = "adagrad"
    step: float = 0.1
    fudge: float = 1e-6
    _acc: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("adagrad", "fixed"):
            raise ValueError(f"unknown step mode {self.mode!r}")
        if not self.step > 0:
            raise ValueError("step size must be positive")

    def reset(self):
        self._acc = None

    def __call__(self, delta: np.ndarray, cols=None) -> np.ndarray:
        if self.mode == "fixed":
            return self.step * delta
        if self._acc is None:
            if cols is not None:
                raise ValueError("call ensure() before a partial AdaGrad update")
            self._acc = np.zeros_like(delta)
        if cols is None:
            self._acc += delta * delta
            return self.step * delta / (self.fudge + np.sqrt(self._acc))
        acc = self._acc[:, cols]
        acc += delta * delta
        self._acc[:, cols] = acc
        return self.step * delta / (self.fudge + np.sqrt(acc))

    def ensure(self, shape):
        if self.mode == "adagrad" and self._acc is None:
            self._acc = np.zeros(shape)


# -- the run loop ------------------------------------------------------------------

@dataclass
class RunConfig:
    particles: int = 100
    iterations: int = 2000
    seed: int = 0
    step_mode: str = "adagrad"
    step: float = 0.1
    fudge: float = 1e-6
    kernel: KernelSpec = field(default_factory=KernelSpec)
    r: int | None = None
    graph: FactorGraph | None = None
    init_mean: float = 10.0
    init_sd: float = 1.0
    init: np.ndarray | None = None
    snapshot_every: int = 100
    keep_ensembles: bool = False
    sequential: bool = False
    refresh_stage2: bool = True
    centered_partition: bool = True
    partition_every: int = 1
    snapshot_fn: Callable[[np.ndarray], dict] | None = None


@dataclass
class Snapshot:
    iteration: int
    mean: np.ndarray
    cov: np.ndarray
    ensemble: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class RunTrajectory:
    snapshots: list[Snapshot]
    final: np.ndarray
    method: Method
    iterations: int


def initial_ensemble(config: RunConfig, dim: int) -> np.ndarray:
    if config.init is not None:
        X = _ensemble(config.init).copy()
        if X.shape[1] != dim:
            raise ValueError("initial ensemble has the wrong dimension")
        return X
    rng = np.random.default_rng(config.seed)
    return config.init_mean + config.init_sd * rng.standard_normal((config.particles, dim))


def _snapshot(it: int, X: np.ndarray, config: RunConfig) -> Snapshot:
    mean = X.mean(axis=0)
    Z = X - mean
    cov = Z.T @ Z / X.shape[0]
    extra = config.snapshot_fn(X) if config.snapshot_fn else {}
    return Snapshot(it, mean, cov, X.copy() if config.keep_ensembles else None, extra)


class _Stepper:
    def __init__(self, schedule: StepSchedule, it_ref):
        self.schedule = schedule
        self.it_ref = it_ref

    def apply(self, X, delta, cols=None):
        upd = self.schedule(delta, cols)
        if cols is None:
            X += upd
        else:
            X[:, cols] += upd
        if not np.all(np.isfinite(X)):
            raise DivergenceError(self.it_ref[0])


def _aump_jacobi(X, target, kernel, parts: list[Partition], stepper: _Stepper, refresh_stage2: bool, it: int):
    m, D = X.shape
    # stage 1: gamma coordinates, kernel over all but d; overlapping updates averaged
    ws = _Workspace(X, _scores(target, X, it), kernel)
    res = ws.batch([(_not(p.d, D), p.gamma) for p in parts])
    delta = np.zeros((m, D))
    count = np.zeros(D)
    for p, phi in zip(parts, res):
        g = list(p.gamma)
        delta[:, g] += phi
        count[g] += 1
    touched = np.flatnonzero(count)
    stepper.apply(X, delta[:, touched] / count[touched], touched)

    # stage 2: x_d with C = S_d + {d}, then C = gamma_d + {d}
    ws = _Workspace(X, _scores(target, X, it), kernel)
    first = np.column_stack([r[:, 0] for r in ws.batch([(p.s + (p.d,), (p.d,)) for p in parts])])
    if refresh_stage2:
        stepper.apply(X, first)
        ws = _Workspace(X, _scores(target, X, it), kernel)
    second = np.column_stack([r[:, 0] for r in ws.batch([(p.gamma + (p.d,), (p.d,)) for p in parts])])
    if refresh_stage2:
        stepper.apply(X, second)
    else:
        stepper.apply(X, first + second)


def _aump_sequential(X, target, kernel, parts: list[Partition], stepper: _Stepper, it: int):
    for p in parts:
        g = np.asarray(p.gamma, dtype=np.int64)
        phi = aump_stage1_direction(X, target, p, kernel, _scores(target, X, it))
        stepper.apply(X, phi, g)
        dcol = np.array([p.d], dtype=np.int64)
        for cluster in (p.s + (p.d,), p.gamma + (p.d,)):
            phi = aump_stage2_direction(X, target, p.d, cluster, kernel, _scores(target, X, it))
            stepper.apply(X, phi[:, None], dcol)


def run(method, target: TargetModel, config: RunConfig) -> RunTrajectory:
    """Run one particle flow from a seeded initial ensemble.

    Deterministic given ``config``.  Raises :class:`DivergenceError` carrying
    the iteration index if any particle becomes non-finite.
    """
    method = Method.parse(method)
    D = target.dim
    if method == Method.AUMP_SVGD:
        if config.r is None or not 1 <= config.r <= D - 1:
            raise ValueError(f"AUMP-SVGD needs 1 <= r <= {D - 1}, got {config.r}")
    graph = config.graph
    if method == Method.MP_SVGD:
        graph = graph if graph is not None else target.factor_graph
        if graph is None:
            raise ValueError("MP-SVGD needs a factor graph")
    if config.iterations < 0:
        raise ValueError("iterations must be non-negative")

    X = initial_ensemble(config, D)
    schedule = StepSchedule(config.step_mode, config.step, config.fudge)
    schedule.ensure(X.shape)
    it_ref = [0]
    stepper = _Stepper(schedule, it_ref)
    kernel = config.kernel
    snaps = [_snapshot(0, X, config)]
    parts = None
    every = max(1, config.snapshot_every)

    for it in range(1, config.iterations + 1):
        it_ref[0] = it
        if method == Method.SVGD:
            stepper.apply(X, svgd_direction(X, target, kernel, _scores(target, X, it)))
        elif method == Method.MP_SVGD:
            ws = _Workspace(X, _scores(target, X, it), kernel)
            stepper.apply(X, _mp_phase(ws, graph))
        else:
            if parts is None or (it - 1) % config.partition_every == 0:
                order = column_order(X, config.centered_partition)
                parts = [partition_from_order(order, d, config.r) for d in range(D)]
            if config.sequential:
                _aump_sequential(X, target, kernel, parts, stepper, it)
            else:
                _aump_jacobi(X, target, kernel, parts, stepper, config.refresh_stage2, it)
        if it % every == 0 or it == config.iterations:
            snaps.append(_snapshot(it, X, config))
    return RunTrajectory(snaps, X, method, config.iterations)
