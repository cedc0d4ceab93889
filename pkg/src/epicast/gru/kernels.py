"""Backend selection for the batched GRU kernels.

The compiled extension is used when importable; setting ``EPICAST_PURE_PYTHON=1``
forces the numpy fallback.  ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py

if os.environ.get("EPICAST_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

forward_batch = _impl.forward_batch
loss_and_grad_batch = _impl.loss_and_grad_batch


def available_backends() -> dict:
    backends = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
        backends["cython"] = _kernels
    except ImportError:
        pass
    return backends
