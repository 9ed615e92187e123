"""Pick the compiled kernels when available, else the numpy fallback.

Set ``CATROBUST_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

_FORCE_PY = os.environ.get("CATROBUST_PURE_PYTHON", "") not in ("", "0")

if _FORCE_PY:
    kernels = _kernels_py
    NAME = "python"
else:
    try:
        from . import _ckernels as kernels  # type: ignore[attr-defined]

        NAME = "cython"
    except ImportError:
        kernels = _kernels_py
        NAME = "python"


def num_threads() -> int:
    """Worker count from ``CATROBUST_NUM_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("CATROBUST_NUM_THREADS", "1")))
    except ValueError:
        return 1
