"""Kernel backend selection.

The compiled extension is used when it imports; set
``VGSUBGROUP_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("VGSUBGROUP_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
    _impl = _compiled
else:
    BACKEND = "python"
    _impl = _fallback

sse_scan = _impl.sse_scan
gi_scan = _impl.gi_scan
slope_stats = _impl.slope_stats


def backends():
    """Available kernel modules by name."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
