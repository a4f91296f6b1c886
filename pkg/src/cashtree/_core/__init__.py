"""Hot-kernel backend selection.

Prefers the compiled Cython extension, falls back to the NumPy reference
implementation. Set CASHTREE_NO_EXT=1 to force the fallback (used by the
backend benchmark and the equivalence tests).
"""

import os

from . import _ref

if os.environ.get("CASHTREE_NO_EXT") == "1":
    _impl = _ref
    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _ref
        BACKEND = "numpy"

kernel_cross = _impl.kernel_cross
kernel_gram = _impl.kernel_gram
kendall_counts = _impl.kendall_counts

__all__ = ["BACKEND", "kernel_cross", "kernel_gram", "kendall_counts"]
