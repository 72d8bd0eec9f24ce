"""Backend selection for the hot kernels.

Tries the compiled extension first and falls back to the numpy
implementations. CONESQ_BACKEND=numpy forces the fallback (used by the
benchmark and the backend-equivalence tests).
"""

import os

from . import np_backend

if os.environ.get("CONESQ_BACKEND") == "numpy":
    _impl = np_backend
    BACKEND = "numpy"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = np_backend
        BACKEND = "numpy"

min_dist = _impl.min_dist
pow_kernel_sum = _impl.pow_kernel_sum
signed_kernel_sum = _impl.signed_kernel_sum

__all__ = ["BACKEND", "min_dist", "np_backend", "pow_kernel_sum", "signed_kernel_sum"]
