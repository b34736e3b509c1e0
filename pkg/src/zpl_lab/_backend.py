"""Select the compiled kernels when available.

Set ``ZPL_LAB_PURE=1`` to force the numpy fallback.
"""

import os

from . import _fallback

if os.environ.get("ZPL_LAB_PURE", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

correlate = _impl.correlate
dead_time_mask = _impl.dead_time_mask
