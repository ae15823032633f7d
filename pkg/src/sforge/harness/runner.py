"""Run every job of an experiment and assemble the report."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from sforge import _backend
from sforge.harness import io
from sforge.harness.config import ExperimentConfig
from sforge.harness.recipes import JobResult, aggregate, execute, plan

log = logging.getLogger(__name__)


def worker_count(n_jobs: int) -> int:
    """Workers to use: ``SFORGE_THREADS`` if set, else the CPU count, never more than the jobs."""
    env = os.environ.get("SFORGE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"SFORGE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError("SFORGE_THREADS must be at least 1")
    else:
        n = os.cpu_count() or 1
    return max(1, min(n, n_jobs))


def _call(args):
    cfg_json, job = args
    return execute(ExperimentConfig.from_json(cfg_json), job)


@dataclass
class RunReport:
    config: ExperimentConfig
    results: list[JobResult]
    rows: list[dict]
    out_dir: Path
    files: list[str]

    @property
    def diverged(self) -> list[JobResult]:
        return [r for r in self.results if r.diverged is not None]

    def summaries(self, **match) -> list[dict]:
        """Per-job summaries whose job fields equal ``match``."""
        out = []
        for r in self.results:
            if all(getattr(r.job, k) == v for k, v in match.items()):
                out.append(dict(r.summary, seed=r.job.seed, method=r.job.method, dim=r.job.dim,
                                particles=r.job.particles, r=r.job.r, band=r.job.band))
        return out


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> RunReport:
    """Execute all jobs, then write results, curves and the report.

    Results are ordered by the job plan, never by completion time, so the
    output does not depend on the worker count.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = plan(cfg)
    n = worker_count(len(jobs)) if workers is None else max(1, min(workers, len(jobs)))
    log.info("%s: %d jobs on %d workers (%s kernels)", cfg.experiment, len(jobs), n, _backend.NAME)
    if n == 1:
        results = [execute(cfg, job) for job in jobs]
    else:
        cfg_json = cfg.to_json()
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_call, [(cfg_json, j) for j in jobs]))

    rows = [row for r in results for row in r.rows]
    all_rows = rows + aggregate(rows)
    files = []
    io.write_results(out / "results.csv", all_rows)
    files.append("results.csv")
    for r in results:
        for name, (header, crow) in r.curves.items():
            p = io.write_curve(out / "curves", name, header, crow)
            files.append(str(p.relative_to(out)))
    report = {
        "config": cfg.to_dict(),
        "backend": _backend.NAME,
        "workers": n,
        "status": "diverged" if any(r.diverged is not None for r in results) else "ok",
        "files": files,
        "jobs": [
            {
                "name": r.job.name, "method": r.job.method, "dim": r.job.dim,
                "particles": r.job.particles, "r": r.job.r, "seed": r.job.seed,
                "band": r.job.band, "wall_ms": r.wall_ms, "diverged_at": r.diverged,
                "error": r.error, "summary": r.summary,
            }
            for r in results
        ],
    }
    io.write_report(out / "report.json", report)
    files.append("report.json")
    return RunReport(cfg, results, all_rows, out, files)
