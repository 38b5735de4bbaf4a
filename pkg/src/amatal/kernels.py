"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``AMATAL_BACKEND=python`` to force the fallback, or
``AMATAL_BACKEND=native`` to make a missing extension an import error.
"""
import os

from . import _kernels_py

_choice = os.environ.get("AMATAL_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "native":
            raise
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "native"

max_pool1d = _impl.max_pool1d
window_attention = _impl.window_attention
nms_sorted = _impl.nms_sorted
greedy_match = _impl.greedy_match


def available_backends():
    """Return ``{name: module}`` for every backend that can be imported."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        found["native"] = _kernels
    return found
