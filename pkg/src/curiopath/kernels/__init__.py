"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly. Setting the environment
variable ``CURIOPATH_PURE_NUMPY=1`` before import forces the numpy path,
which is slower but has no compilation step and is the reference that the
compiled kernels are tested against.
"""

import os

from . import _numpy as numpy_impl

BACKEND = "numpy"
if os.environ.get("CURIOPATH_PURE_NUMPY", "").strip().lower() not in ("1", "true", "yes"):
    try:
        from . import _numba as numba_impl
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_impl = None
    else:
        BACKEND = "numba"
else:
    numba_impl = None

_impl = numba_impl if BACKEND == "numba" else numpy_impl

mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
adam_update = _impl.adam_update
m3pl_objective = _impl.m3pl_objective
m3pl_gradient = _impl.m3pl_gradient
m3pl_ascent = _impl.m3pl_ascent

__all__ = [
    "BACKEND",
    "adam_update",
    "m3pl_ascent",
    "m3pl_gradient",
    "m3pl_objective",
    "mlp_backward",
    "mlp_forward",
    "numba_impl",
    "numpy_impl",
]
