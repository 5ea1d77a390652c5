"""Backend selection for the oracle's hot kernels.

The compiled extension is preferred when present; set the environment
variable ``PROPERLMM_PURE_PYTHON=1`` (before import) to force the numpy
fallback. ``bench/bench_kernels.py`` compares the two.
"""

import os

from . import _kernels_np

if os.environ.get("PROPERLMM_PURE_PYTHON"):
    _impl = _kernels_np
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _kernels_np

BACKEND = _impl.BACKEND_NAME

mix_table_accumulate = _impl.mix_table_accumulate
box_clip_correction = _impl.box_clip_correction
factor_product_reduce = _impl.factor_product_reduce

# reference implementation, importable regardless of backend
numpy_backend = _kernels_np


def get_backend(name=None):
    """Return the kernel namespace for ``name`` (or the active backend)."""
    if name in (None, BACKEND):
        return _impl
    if name == "numpy":
        return _kernels_np
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
