"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``DYNAMASK_PURE_PYTHON=1`` to force the numpy path.
"""
from __future__ import annotations

import os

from . import _kernels_py as py

compiled = None
if os.environ.get("DYNAMASK_PURE_PYTHON") != "1":
    try:
        from . import _kernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

BACKEND = "compiled" if compiled is not None else "python"
impl = compiled if compiled is not None else py
