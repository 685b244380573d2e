"""Back-end selection for the hot kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise, or when
``V2XBEAM_PURE_PYTHON=1`` is set, the numpy versions in ``_kernels_py`` are used.
Both produce identical results.
"""
import os

from . import _kernels_py

if os.environ.get("V2XBEAM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

segments_blocked = _impl.segments_blocked
fill_convex_polygon = _impl.fill_convex_polygon
run_lengths = _impl.run_lengths


def implementations():
    """Available back-ends by name, for tests and benchmarks."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
