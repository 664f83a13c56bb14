"""Hot-kernel dispatch: native Cython extension with a NumPy fallback.

``TIGHTFIT_PURE_KERNELS=1`` forces the fallback lane. Both lanes implement
identical semantics; ``tests/test_kernels.py`` asserts exact agreement.
"""

import os

from . import _reference

if os.environ.get("TIGHTFIT_PURE_KERNELS") == "1":
    _impl = _reference
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _reference

USING_NATIVE = bool(getattr(_impl, "IS_NATIVE", False))

multi_source_dijkstra = _impl.multi_source_dijkstra
raycast = _impl.raycast


def lane_name():
    return "native" if USING_NATIVE else "fallback"


def get_lane(native):
    """Return a specific kernel module (for benchmarks and lane tests)."""
    if not native:
        return _reference
    from . import _native
    return _native
