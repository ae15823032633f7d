"""``sforge`` command line.

Exit codes: 0 success, 1 a verification failed, 2 configuration error,
3 a run diverged (outputs are still written and flagged in report.json).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from sforge.harness.config import ConfigError, ExperimentConfig

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

# Published values for the two bound tables, keyed by (dim, m).
TABLE1_REFERENCE = {
    10: dict(zip((2, 5, 10, 15, 20, 25), (1.43, 1.18, 1.17, 1.17, 1.17, 1.17))),
    50: dict(zip((2, 5, 10, 15, 20, 25), (2.11, 1.63, 1.55, 1.52, 1.52, 1.51))),
}
TABLE2_REFERENCE = {2: {1000: 0.008, 5000: 0.002}, 5: {1000: 0.3, 5000: 0.11}}

_FLAG_FIELDS = {
    "experiment": "experiment", "method": "methods", "dims": "dims", "particles": "particles",
    "iters": "iterations", "r": "r", "seeds": "seeds", "out": "out",
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sforge", description="Stein particle inference experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment recipe")
    r.add_argument("--config", help="flat JSON config file")
    r.add_argument("--experiment")
    r.add_argument("--method", help="method or comma-separated methods")
    r.add_argument("--dims", help="e.g. 10,20,50")
    r.add_argument("--particles", help="e.g. 100 or 10,50")
    r.add_argument("--iters")
    r.add_argument("--r", help="Gamma set size(s) for AUMP-SVGD")
    r.add_argument("--seeds", help="e.g. 0..9 or 0,3,7")
    r.add_argument("--out")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field (repeatable)")

    v = sub.add_parser("verify-bounds", help="reproduce a bound table and check empirical <= bound")
    v.add_argument("--table", type=int, choices=(1, 2), required=True)
    v.add_argument("--seeds", help="override the seed list")
    v.add_argument("--out", help="output directory")

    sub.add_parser("selftest", help="run the built-in oracle checks")
    return p


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a flat JSON object")
    for flag, key in _FLAG_FIELDS.items():
        val = getattr(args, flag, None)
        if val is not None:
            data[key] = val
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            data[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            data[k.strip()] = v
    return ExperimentConfig.from_dict(data)


def cmd_run(args) -> int:
    from sforge.harness.runner import run_experiment

    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = run_experiment(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(rep.files)} files to {rep.out_dir}")
    if rep.diverged:
        for r in rep.diverged:
            print(f"diverged: {r.job.name} at iteration {r.diverged}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def table_rows(rep, table: int) -> list[dict]:
    """Seed-mean empirical value and bound per (dim, m) cell."""
    out = []
    for row in rep.rows:
        if row["seed"] != "mean":
            continue
        dim, m = row["dim"], row["particles"]
        if table == 1:
            emp, bound = row["max_norm_sq"], row["prop1_bound"]
            ref = TABLE1_REFERENCE.get(m, {}).get(dim)
        else:
            emp, bound = row["cov_err_sq"], row["prop2_bound"]
            ref = TABLE2_REFERENCE.get(dim, {}).get(m)
        per_seed = [r for r in rep.rows if r["seed"] not in ("mean", "std")
                    and r["dim"] == dim and r["particles"] == m]
        col = "max_norm_sq" if table == 1 else "cov_err_sq"
        bcol = "prop1_bound" if table == 1 else "prop2_bound"
        every = all(r[col] <= r[bcol] for r in per_seed)
        out.append({"dim": dim, "m": m, "empirical": emp, "bound": bound, "reference": ref,
                    "holds": bool(emp <= bound and every)})
    return out


def cmd_verify(args) -> int:
    from sforge.harness.runner import run_experiment

    data = {"experiment": f"bounds_table{args.table}"}
    if args.seeds:
        data["seeds"] = args.seeds
    if args.out:
        data["out"] = args.out
    try:
        cfg = ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rep = run_experiment(cfg)
    if rep.diverged:
        return EXIT_DIVERGED
    rows = table_rows(rep, args.table)
    what = "max |x|^2" if args.table == 1 else "|Sigma_m - Sigma|^2"
    print(f"{'dim':>4} {'m':>6} {what:>20} {'bound':>12} {'reference':>10}  holds")
    for t in rows:
        ref = "" if t["reference"] is None else f"{t['reference']:.4g}"
        print(f"{t['dim']:>4} {t['m']:>6} {t['empirical']:>20.4g} {t['bound']:>12.4g} {ref:>10}  "
              f"{'yes' if t['holds'] else 'NO'}")
    return EXIT_OK if all(t["holds"] for t in rows) else EXIT_FAILED


def cmd_selftest(args) -> int:
    from sforge.harness.selftest import run_all

    ok = run_all(print)
    return EXIT_OK if ok else EXIT_FAILED


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "verify-bounds": cmd_verify, "selftest": cmd_selftest}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
