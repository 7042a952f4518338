"""Kernel backend selection.

The compiled extension is preferred; the pure-Python module is used when it
is missing or when ``LEOSEM_PURE_PYTHON`` is set to a truthy value.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("LEOSEM_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

j0 = _impl.j0
j0_array = _impl.j0_array
masked_log_softmax = _impl.masked_log_softmax
sample_segment = _impl.sample_segment


def backends():
    """Return every importable backend module keyed by name."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels as compiled
    except ImportError:
        return found
    found["compiled"] = compiled
    return found
