"""Kernel backend selection.

The dense inner loops (softmax rows, the tanh network's forward/backward,
SGD updates, greedy prototype ordering) exist twice: a Cython extension and
a numpy fallback with identical signatures.  The compiled core is preferred
when importable; set ``PROCA_BACKEND=py`` to force the numpy kernels or
``PROCA_BACKEND=cy`` to require the extension.  The choice is fixed per
process, which keeps a run deterministic end to end.
"""

import os

_requested = os.environ.get("PROCA_BACKEND", "auto").lower()

if _requested not in ("auto", "cy", "py"):
    raise ValueError(f"PROCA_BACKEND must be auto, cy or py, got {_requested!r}")

if _requested in ("auto", "cy"):
    try:
        from . import _cy_impl as _impl
        BACKEND = "cython"
    except ImportError:
        if _requested == "cy":
            raise
        from . import _np_impl as _impl
        BACKEND = "numpy"
else:
    from . import _np_impl as _impl
    BACKEND = "numpy"

row_softmax = _impl.row_softmax
mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
sgd_update = _impl.sgd_update
herd_order = _impl.herd_order
