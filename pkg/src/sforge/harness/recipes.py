"""Experiment recipes.

A recipe expands an :class:`ExperimentConfig` into independent jobs (one per
method, dimension, particle count, ``r``, band and seed).  Each job is a pure
function of its parameters, so jobs can run in any order on any number of
workers and still produce the same rows.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from sforge import analysis
from sforge.dynamics import DivergenceError, RunConfig, run
from sforge.kernels import KernelSpec
from sforge.targets import (
    BandedGaussian, GaussianTarget, LogisticPosterior, make_diffusion_problem, spaceship,
)
from sforge.harness import data as datamod
from sforge.harness.config import ExperimentConfig

CSV_COLUMNS = (
    "experiment", "method", "dim", "particles", "r", "seed", "iteration",
    "energy_distance", "cov_error", "max_norm_sq", "prop1_bound", "cov_err_sq",
    "prop2_bound", "wall_ms",
)
METRIC_COLUMNS = CSV_COLUMNS[7:]


@dataclass(frozen=True)
class Job:
    experiment: str
    label: str
    method: str
    dim: int
    particles: int
    r: int | None
    seed: int
    band: int | None = None

    @property
    def name(self) -> str:
        parts = [self.label, self.method, f"D{self.dim}", f"m{self.particles}"]
        if self.r is not None:
            parts.append(f"r{self.r}")
        parts.append(f"seed{self.seed}")
        return "_".join(parts)


@dataclass
class JobResult:
    job: Job
    rows: list[dict] = field(default_factory=list)
    curves: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    wall_ms: float = 0.0
    diverged: int | None = None
    error: str | None = None


def plan(cfg: ExperimentConfig) -> list[Job]:
    jobs = []
    bands = cfg.bands if cfg.experiment == "nonsparse_sweep" else [None]
    for band in bands:
        label = cfg.experiment if band is None else f"{cfg.experiment}_b{band}"
        for method in cfg.methods:
            rs = cfg.r if method == "aump_svgd" else [None]
            for dim in cfg.dims:
                for m in cfg.particles:
                    for r in rs:
                        for seed in cfg.seeds:
                            jobs.append(Job(cfg.experiment, label, method, dim, m, r, seed, band))
    return jobs


def kernel_of(cfg: ExperimentConfig) -> KernelSpec:
    return KernelSpec(cfg.kernel, cfg.bandwidth)


def run_config(cfg: ExperimentConfig, job: Job, **over) -> RunConfig:
    kw = dict(
        particles=job.particles, iterations=cfg.iterations, seed=job.seed,
        step_mode=cfg.step_mode, step=cfg.step, fudge=cfg.fudge, kernel=kernel_of(cfg),
        r=job.r, init_mean=cfg.init_mean, init_sd=cfg.init_sd,
        snapshot_every=cfg.snapshot_every, sequential=cfg.sequential,
        refresh_stage2=cfg.refresh_stage2, centered_partition=cfg.centered_partition,
    )
    kw.update(over)
    return RunConfig(**kw)


def _row(job: Job, iteration: int, **metrics) -> dict:
    row = {
        "experiment": job.label, "method": job.method, "dim": job.dim,
        "particles": job.particles, "r": job.r, "seed": job.seed, "iteration": iteration,
    }
    for c in METRIC_COLUMNS:
        row[c] = metrics.get(c)
    return row


# -- sampling-quality experiments ----------------------------------------------------------

def _gaussian_like(cfg: ExperimentConfig, job: Job, target, sigma) -> JobResult:
    reference = analysis.EnergyReference(target.sample(cfg.reference_samples, [job.seed, 1]))

    def metrics(X):
        return {"energy_distance": reference(X), "cov_error": analysis.cov_error(X, sigma)}

    traj = run(job.method, target, run_config(cfg, job, snapshot_fn=metrics))
    res = JobResult(job)
    curve = [(s.iteration, s.extra["energy_distance"], s.extra["cov_error"]) for s in traj.snapshots]
    res.curves[job.name] = (("iteration", "energy_distance", "cov_error"), curve)
    last = traj.snapshots[-1]
    res.rows.append(_row(job, last.iteration, **last.extra))
    res.summary = {"final_variance_mean": float(np.mean(np.diag(last.cov)))}
    return res


def recipe_gaussian(cfg, job):
    t = GaussianTarget.standard(job.dim)
    return _gaussian_like(cfg, job, t, t.covariance)


def recipe_spaceship(cfg, job):
    rho = cfg.spaceship_rho
    t = spaceship(job.dim, rho[0], rho[1] if len(rho) > 1 else 0.5)
    return _gaussian_like(cfg, job, t, t.covariance)


def recipe_nonsparse(cfg, job):
    t = BandedGaussian(job.dim, job.band, cfg.rho)
    res = _gaussian_like(cfg, job, t, t.covariance)
    res.summary["band"] = job.band
    return res


# -- inverse problem and classification -----------------------------------------------------

def recipe_diffusion(cfg, job):
    target, inc, truth = make_diffusion_problem(job.seed, cfg.sigma, job.dim, cfg.n_obs)
    traj = run(job.method, target, run_config(cfg, job))
    U = target.path(traj.final)
    mean, sd = U.mean(axis=0), U.std(axis=0)
    idx = target.obs_index
    cover_obs = float(np.mean(np.abs(target.observations - mean[idx]) <= sd[idx]))
    cover_path = float(np.mean(np.abs(truth - mean) <= sd))
    rmse = float(np.sqrt(np.mean((mean - truth) ** 2)))
    res = JobResult(job)
    res.rows.append(_row(job, traj.iterations))
    z_full = np.full(job.dim, math.nan)
    z_full[idx] = target.observations
    curve = [(float(t), float(a), float(b), float(c), float(mu - s), float(mu + s))
             for t, a, b, c, mu, s in zip(target.times, truth, z_full, mean, mean, sd)]
    res.curves[job.name] = (("t", "truth", "observation", "mean", "lower", "upper"), curve)
    res.summary = {"coverage_obs": cover_obs, "coverage_path": cover_path, "rmse": rmse,
                   "mean_sd": float(sd.mean())}
    return res


def logistic_problem(cfg: ExperimentConfig, dim: int):
    """Training posterior, test split and bookkeeping for the logistic recipe."""
    info = {}
    if cfg.dataset:
        split = datamod.load_covertype(cfg.dataset, seed=cfg.data_seed)
        info["dataset"] = cfg.dataset
    else:
        ds = datamod.synth_logistic(cfg.n_data, dim, cfg.data_seed)
        split = datamod.split_data(ds.features, ds.labels, cfg.data_seed)
        info["w_star"] = ds.w_star.tolist()
        info["bayes_accuracy"] = ds.bayes_accuracy()
        info["w_star_test_accuracy"] = datamod.accuracy(ds.w_star, split.test_x, split.test_y)
    post = LogisticPosterior(split.train_x, split.train_y, cfg.prior_var)
    w_map = datamod.fit_map(post)
    info["map_accuracy"] = datamod.accuracy(w_map, split.test_x, split.test_y)
    info["n_train"] = int(split.train_y.size)
    info["n_test"] = int(split.test_y.size)
    return post, split, w_map, info


def recipe_logistic(cfg, job):
    post, split, w_map, info = logistic_problem(cfg, job.dim)
    if post.dim != job.dim:
        raise ValueError(f"dataset has {post.dim} features but dims asks for {job.dim}")
    traj = run(job.method, post, run_config(cfg, job))
    W = traj.final
    res = JobResult(job)
    res.rows.append(_row(job, traj.iterations))
    res.summary = dict(info)
    res.summary["accuracy"] = datamod.accuracy(W.mean(axis=0), split.test_x, split.test_y)
    res.summary["predictive_accuracy"] = datamod.predictive_accuracy(W, split.test_x, split.test_y)
    res.summary["map_distance"] = float(np.linalg.norm(W.mean(axis=0) - w_map))
    return res


# -- bound tables and the dependence diagnostic ---------------------------------------------

def _bandwidth_for(cfg: ExperimentConfig, X) -> float:
    return kernel_of(cfg).resolve(X)


def recipe_table1(cfg, job):
    t = GaussianTarget.standard(job.dim)
    traj = run(job.method, t, run_config(cfg, job))
    X = traj.final
    rep = analysis.prop1_bound(X, _bandwidth_for(cfg, X), float(np.trace(t.covariance)))
    res = JobResult(job)
    res.rows.append(_row(job, traj.iterations, max_norm_sq=rep.max_norm_sq, prop1_bound=rep.prop1_bound))
    res.summary = {"bound": rep.as_dict()}
    return res


def default_fit_gaps(m: int) -> list[int]:
    """Five evenly spaced gaps up to half the ensemble."""
    step = max(1, m // 10)
    return [g for g in (step * k for k in range(1, 6)) if g < m]


def fitted_alpha(cfg: ExperimentConfig, X, target) -> tuple[float, list, bool]:
    if cfg.alpha is not None:
        return cfg.alpha, [], False
    gaps = cfg.gaps or default_fit_gaps(X.shape[0])
    curve = analysis.decay_curve(X, target, kernel_of(cfg), gaps)
    fit = analysis.estimate_alpha(curve)
    return fit.alpha, curve, fit.degenerate


def recipe_table2(cfg, job):
    t = GaussianTarget.standard(job.dim)
    traj = run(job.method, t, run_config(cfg, job))
    X = traj.final
    alpha, curve, degenerate = fitted_alpha(cfg, X, t)
    rep = analysis.bound_report(X, t.covariance, _bandwidth_for(cfg, X), alpha)
    res = JobResult(job)
    res.rows.append(_row(job, traj.iterations, cov_error=rep.cov_err, max_norm_sq=rep.max_norm_sq,
                         prop1_bound=rep.prop1_bound, cov_err_sq=rep.cov_err_sq,
                         prop2_bound=rep.prop2_bound_sq))
    res.summary = {"bound": rep.as_dict(), "alpha_degenerate": degenerate,
                   "decay_curve": [list(p) for p in curve]}
    return res


def recipe_mdep(cfg, job):
    t = GaussianTarget.standard(job.dim)
    traj = run(job.method, t, run_config(cfg, job))
    X = traj.final
    gaps = cfg.gaps or default_fit_gaps(job.particles)
    curve = analysis.decay_curve(X, t, kernel_of(cfg), gaps)
    fit = analysis.estimate_alpha(curve)
    res = JobResult(job)
    res.rows.append(_row(job, traj.iterations, cov_error=analysis.cov_error(X, t.covariance),
                         max_norm_sq=float(np.max(np.einsum("ij,ij->i", X, X)))))
    res.curves[job.name] = (("gap", "magnitude"), [tuple(p) for p in curve])
    res.summary = {"decay_curve": [list(p) for p in curve], "alpha": fit.alpha,
                   "alpha_degenerate": fit.degenerate}
    return res


RECIPES = {
    "gaussian": recipe_gaussian,
    "spaceship": recipe_spaceship,
    "nonsparse_sweep": recipe_nonsparse,
    "diffusion": recipe_diffusion,
    "logistic": recipe_logistic,
    "bounds_table1": recipe_table1,
    "bounds_table2": recipe_table2,
    "mdep_decay": recipe_mdep,
}


def execute(cfg: ExperimentConfig, job: Job) -> JobResult:
    """Run one job, folding divergence into the result instead of raising."""
    t0 = time.perf_counter()
    try:
        res = RECIPES[job.experiment](cfg, job)
    except DivergenceError as exc:
        res = JobResult(job, diverged=exc.iteration, error=str(exc))
    res.wall_ms = (time.perf_counter() - t0) * 1000.0
    if cfg.timing:
        for row in res.rows:
            row["wall_ms"] = res.wall_ms
    return res


# -- aggregation -------------------------------------------------------------------------------

def aggregate(rows: list[dict]) -> list[dict]:
    """Seed-mean and seed-standard-deviation rows per configuration.

    A metric is aggregated only when every seed reports it.  The standard
    deviation uses ``ddof=1`` (``0`` for a single seed).
    """
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(row[c] for c in ("experiment", "method", "dim", "particles", "r", "iteration"))
        groups.setdefault(key, []).append(row)
    out = []
    for key, grp in groups.items():
        base = dict(zip(("experiment", "method", "dim", "particles", "r", "iteration"), key))
        mean_row = dict(base, seed="mean")
        std_row = dict(base, seed="std")
        for c in METRIC_COLUMNS:
            vals = [g[c] for g in grp]
            if any(v is None for v in vals):
                mean_row[c] = std_row[c] = None
                continue
            arr = np.array(vals, dtype=float)
            mean_row[c] = float(math.fsum(arr) / arr.size)
            std_row[c] = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        out.extend([mean_row, std_row])
    return out
