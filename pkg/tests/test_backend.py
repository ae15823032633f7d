"""The compiled core and the numpy fallback must be interchangeable."""
import os
import subprocess
import sys

import numpy as np
import pytest

from sforge import _backend, _pykernels

try:
    from sforge import _ckernels
except ImportError:  # pragma: no cover - exercised only without a build
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def _data(rng, m=23, D=6):
    X = rng.standard_normal((m, D))
    S = -X + 0.1 * rng.standard_normal((m, D))
    return np.ascontiguousarray(X.T), np.ascontiguousarray(S.T)


@needs_ext
def test_sqdist(rng):
    XT, _ = _data(rng)
    for cols in ([0], [1, 4], list(range(6))):
        c = np.array(cols, dtype=np.int64)
        assert np.allclose(_ckernels.sqdist_cols(XT, c), _pykernels.sqdist_cols(XT, c), rtol=1e-12, atol=1e-12)
        full = _ckernels.sqdist_cols(XT, np.arange(6, dtype=np.int64))
        assert np.allclose(_ckernels.sqdist_remove(full, XT, c), _pykernels.sqdist_remove(full, XT, c),
                           rtol=1e-11, atol=1e-11)


@needs_ext
@pytest.mark.parametrize("family", [0, 1])
def test_stein_phi(rng, family):
    XT, ST = _data(rng)
    sq = _pykernels.sqdist_cols(XT, np.arange(6, dtype=np.int64))
    cols = np.array([0, 2, 5], dtype=np.int64)
    a = _ckernels.stein_phi(sq, XT, ST, cols, 0.8, family)
    b = _pykernels.stein_phi(sq, XT, ST, cols, 0.8, family)
    assert np.allclose(a, b, rtol=1e-11, atol=1e-13)


@needs_ext
@pytest.mark.parametrize("m", [2, 3, 10, 51])
def test_median_exact(rng, m):
    XT, _ = _data(rng, m=m)
    sq = _ckernels.sqdist_cols(XT, np.arange(6, dtype=np.int64))
    assert _ckernels.median_pairwise(sq) == _pykernels.median_pairwise(sq)


@needs_ext
@pytest.mark.parametrize("h", [-1.0, 0.6])
def test_batch_phi(rng, h):
    XT, ST = _data(rng)
    full = _ckernels.sqdist_cols(XT, np.arange(6, dtype=np.int64))
    kcols = np.array([[0, 0, 0], [1, 3, 0], [2, 4, 5], [0, 0, 0]], dtype=np.int64)
    klen = np.array([1, 2, 3, 0], dtype=np.int64)
    kmode = np.array([0, 1, 0, 2], dtype=np.int32)
    ucols = np.array([[1, 2], [3, 0], [0, 1], [5, 0]], dtype=np.int64)
    ulen = np.array([2, 1, 2, 1], dtype=np.int64)
    for fam in (0, 1):
        oc, hc = _ckernels.batch_phi(full, XT, ST, kcols, klen, kmode, ucols, ulen, h, fam, 1.0)
        op, hp = _pykernels.batch_phi(full, XT, ST, kcols, klen, kmode, ucols, ulen, h, fam, 1.0)
        assert np.allclose(hc, hp, rtol=1e-12)
        assert np.allclose(oc, op, rtol=1e-10, atol=1e-13)


def test_backend_name_reflects_module():
    assert _backend.NAME in ("cython", "python")
    if _ckernels is not None and os.environ.get("SFORGE_PURE", "") in ("", "0"):
        assert _backend.NAME == "cython"


def test_pure_flag_selects_fallback():
    env = dict(os.environ, SFORGE_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from sforge import _backend; print(_backend.NAME)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_fallback_runs_end_to_end():
    code = (
        "from sforge.dynamics import run, RunConfig\n"
        "from sforge.targets import GaussianTarget\n"
        "tr = run('aump_svgd', GaussianTarget.standard(4), RunConfig(particles=12, iterations=5, r=1))\n"
        "print(tr.final.shape)\n"
    )
    env = dict(os.environ, SFORGE_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "(12, 4)"
