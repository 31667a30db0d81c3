"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The dilated temporal convolution (forward and backward) dominates training
and embedding extraction, and the sliding-window mean dominates feature
normalization.  If the Cython extension built, it is selected at import
time; set CTSFORGE_PURE_PYTHON=1 to force the numpy implementation.
Both implementations satisfy identical contracts (see reference.py) and
are cross-checked in the test suite; benchmarks/bench_kernels.py compares
their throughput.
"""

import os

from ctsforge.kernels import reference

if os.environ.get("CTSFORGE_PURE_PYTHON"):
    _impl = reference
else:
    try:
        from ctsforge.kernels import _fastops as _impl
    except ImportError:
        _impl = reference

BACKEND = "compiled" if _impl is not reference else "numpy"

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
sliding_window_mean = _impl.sliding_window_mean

__all__ = [
    "BACKEND",
    "conv1d_forward",
    "conv1d_backward",
    "sliding_window_mean",
    "reference",
]
