"""Pick the kernel implementation once, at import.

Set ``TSRISK_PURE_PYTHON=1`` to force the numpy fallback even when the
compiled extension is available.
"""

import os

BACKEND = "python"
if os.environ.get("TSRISK_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as kernels

__all__ = ["BACKEND", "kernels"]
