"""Numeric hot kernels with a compiled core and a pure-Python fallback.

The compiled extension (``_native``, built from Cython) is preferred; the
numpy implementation in ``pykernels`` is selected when the extension is
missing or when the environment variable ``AFRNET_PURE_PYTHON`` is set.
Both backends implement identical algorithms.
"""

import os

if os.environ.get("AFRNET_PURE_PYTHON"):
    from . import pykernels as _impl
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pykernels as _impl

BACKEND = _impl.BACKEND
rbf_kernel_matrix = _impl.rbf_kernel_matrix
smo_epsilon_svr = _impl.smo_epsilon_svr
jacobi_eigh = _impl.jacobi_eigh

__all__ = ["BACKEND", "rbf_kernel_matrix", "smo_epsilon_svr", "jacobi_eigh"]
