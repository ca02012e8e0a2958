"""Kernel backend selection.

The compiled extension is used when importable; ``AUTOIDS_BACKEND=python``
forces the numpy fallback (``compiled`` makes a missing extension an error).
"""
from __future__ import annotations

import os

from . import _pykernels

_requested = os.environ.get("AUTOIDS_BACKEND", "auto").strip().lower()

if _requested == "python":
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        kernels = _pykernels
        BACKEND = "python"

GINI = _pykernels.GINI
ENTROPY = _pykernels.ENTROPY


def get_kernels(name: str | None = None):
    """Return the kernel module for ``name`` ("compiled"/"python"), default active."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
