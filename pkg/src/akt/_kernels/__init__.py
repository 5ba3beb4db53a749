"""Kernel backend selection.

The compiled extension (`akt._kernels._core`) is preferred when it was built;
otherwise the NumPy implementation is used. `AKT_BACKEND=numpy|cython` forces
the choice (forcing `cython` fails loudly if the extension is missing).

Both backends are deterministic run-to-run for a fixed machine and backend;
bit-for-bit agreement *across* backends is not promised because BLAS and
fused-loop reduction orders differ in the last bits.
"""

import os

from akt.errors import ConfigError

_requested = os.environ.get("AKT_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "cython"):
    raise ConfigError(f"AKT_BACKEND must be 'numpy' or 'cython', got {_requested!r}")

if _requested == "numpy":
    from akt._kernels import numpy_backend as _impl

    BACKEND = "numpy"
elif _requested == "cython":
    from akt._kernels import _core as _impl

    BACKEND = "cython"
else:
    try:
        from akt._kernels import _core as _impl

        BACKEND = "cython"
    except ImportError:
        from akt._kernels import numpy_backend as _impl

        BACKEND = "numpy"

affine_forward = _impl.affine_forward
affine_backward = _impl.affine_backward
affine_backward_input = _impl.affine_backward_input
relu_forward = _impl.relu_forward
relu_backward = _impl.relu_backward
softmax_xent = _impl.softmax_xent
sigmoid_bce = _impl.sigmoid_bce
sgd_update = _impl.sgd_update
