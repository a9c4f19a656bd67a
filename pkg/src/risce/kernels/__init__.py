"""Convolution kernel backend selection.

The compiled Cython kernels are preferred when the extension built; the
pure NumPy implementation is the fallback.  Set ``RISCE_PURE_PYTHON=1`` to
force the fallback (useful for the backend benchmark and debugging).
"""

import os

from . import _numpy_backend

if os.environ.get("RISCE_PURE_PYTHON"):
    _impl = _numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _conv_cy as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _numpy_backend
        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_weights = _impl.conv2d_backward_weights


def get_backend(name: str):
    """Return the (forward, backward_input, backward_weights) triple of a backend."""
    if name == "numpy":
        mod = _numpy_backend
    elif name == "cython":
        from . import _conv_cy as mod
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return mod.conv2d_forward, mod.conv2d_backward_input, mod.conv2d_backward_weights


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        from . import _conv_cy  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names
