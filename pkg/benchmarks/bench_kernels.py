"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--m 100] [--dim 50] [--repeat 20]

Each primitive is timed on identical inputs with both backends, then one
full AUMP-SVGD iteration is timed end to end in a subprocess per backend
(the backend is fixed at import, so it cannot be switched in-process).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sforge import _pykernels

try:
    from sforge import _ckernels
except ImportError:
    _ckernels = None

E2E = """
import time
from sforge import _backend
from sforge.dynamics import RunConfig, run
from sforge.targets import GaussianTarget
t = GaussianTarget.standard({dim})
cfg = RunConfig(particles={m}, iterations={iters}, r=3, step=1.0)
run("{method}", t, RunConfig(particles={m}, iterations=1, r=3))
t0 = time.perf_counter()
run("{method}", t, cfg)
print(_backend.NAME, (time.perf_counter() - t0) / {iters} * 1000)
"""


def primitives(m, dim, seed=0):
    rng = np.random.default_rng(seed)
    XT = np.ascontiguousarray(rng.standard_normal((dim, m)))
    ST = np.ascontiguousarray(-XT)
    allc = np.arange(dim, dtype=np.int64)
    full = _pykernels.sqdist_cols(XT, allc)
    three = np.array([1, 7, 20], dtype=np.int64) % dim
    # one request per coordinate, like an AUMP stage-1 batch
    kcols = np.zeros((dim, 1), dtype=np.int64)
    kcols[:, 0] = allc
    klen = np.ones(dim, dtype=np.int64)
    kmode = np.zeros(dim, dtype=np.int32)
    ucols = np.zeros((dim, 3), dtype=np.int64)
    for d in range(dim):
        ucols[d] = [(d + 1) % dim, (d + 2) % dim, (d + 3) % dim]
    ulen = np.full(dim, 3, dtype=np.int64)
    return {
        "sqdist_cols(all)": lambda k: k.sqdist_cols(XT, allc),
        "sqdist_remove(3)": lambda k: k.sqdist_remove(full, XT, three),
        "stein_phi(all)": lambda k: k.stein_phi(full, XT, ST, allc, 1.0, 0),
        "median_pairwise": lambda k: k.median_pairwise(full),
        f"batch_phi({dim} rows)": lambda k: k.batch_phi(full, XT, ST, kcols, klen, kmode, ucols, ulen,
                                                         -1.0, 0, 1.0),
    }


def best_ms(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1000


def end_to_end(method, m, dim, iters, pure):
    env = dict(os.environ, SFORGE_PURE="1" if pure else "0")
    code = E2E.format(method=method, m=m, dim=dim, iters=iters)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, ms = out.stdout.split()
    return name, float(ms)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--iters", type=int, default=20)
    args = p.parse_args()

    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"m={args.m} D={args.dim}, best of {args.repeat} (ms)")
    print(f"{'primitive':<24}" + "".join(f"{n:>10}" for n, _ in backends) + ("   speedup" if _ckernels else ""))
    for label, fn in primitives(args.m, args.dim).items():
        times = [best_ms(lambda: fn(k), args.repeat) for _, k in backends]
        line = f"{label:<24}" + "".join(f"{t:>10.3f}" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:>9.1f}x"
        print(line)

    print(f"\nper-iteration wall time, {args.iters} iterations (ms)")
    for method in ("svgd", "mp_svgd", "aump_svgd"):
        cells = [end_to_end(method, args.m, args.dim, args.iters, pure) for pure in (True, False)]
        print(f"{method:<24}" + "".join(f"{ms:>10.2f}" for _, ms in cells)
              + f"   ({', '.join(n for n, _ in cells)})")


if __name__ == "__main__":
    main()
