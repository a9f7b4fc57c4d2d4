"""Hot conv/pool kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built; set ``MART_KERNELS=python``
to force the numpy implementation.
"""

import os

from mart._kernels import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("MART_KERNELS", "").lower() != "python":
    try:
        from mart._kernels import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

im2col3x3 = _impl.im2col3x3
col2im3x3 = _impl.col2im3x3
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_backward = _impl.maxpool2d_backward

__all__ = [
    "BACKEND",
    "im2col3x3",
    "col2im3x3",
    "maxpool2d_forward",
    "maxpool2d_backward",
]
