"""Select the compiled kernel module when available.

Set ``SFORGE_PURE=1`` to force the numpy fallback.
"""
import os

if os.environ.get("SFORGE_PURE", "") not in ("", "0"):
    from sforge import _pykernels as impl
    NAME = "python"
else:
    try:
        from sforge import _ckernels as impl
        NAME = "cython"
    except ImportError:  # extension not built
        from sforge import _pykernels as impl
        NAME = "python"

sqdist_cols = impl.sqdist_cols
sqdist_remove = impl.sqdist_remove
stein_phi = impl.stein_phi
median_pairwise = impl.median_pairwise
batch_phi = impl.batch_phi
