"""Backend dispatch for the numeric kernels.

The env var ``HCD_BACKEND`` selects the implementation at import time:

* ``auto`` (default): numba when importable, else pure NumPy
* ``numba``: require the JIT backend (ImportError if numba is missing)
* ``numpy``: force the pure-NumPy fallback

Both backends expose the same functions with the same semantics; see
``benchmarks/bench_backends.py`` for a speed comparison.
"""

import os

_requested = os.environ.get("HCD_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"HCD_BACKEND={_requested!r} not understood (use auto, numba or numpy)")

if _requested in ("auto", "numba"):
    try:
        from . import numba_impl as _impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import numpy_impl as _impl
        BACKEND = "numpy"
else:
    from . import numpy_impl as _impl
    BACKEND = "numpy"

NEEDS_PRESORT = _impl.NEEDS_PRESORT
gradient_mag_ori = _impl.gradient_mag_ori
box_mean = _impl.box_mean
bin_orientations = _impl.bin_orientations
block_mean = _impl.block_mean
apply_filter_bank = _impl.apply_filter_bank
roi_pool_window = _impl.roi_pool_window
bilinear_resize = _impl.bilinear_resize
forest_apply = _impl.forest_apply
best_splits_level = _impl.best_splits_level
