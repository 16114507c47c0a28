"""Kernel backend selection.

The compiled core is used when it imports; ``ERNWAVE_BACKEND=python`` forces
the pure-Python fallback.
"""

from __future__ import annotations

import os

from . import _kernel_py

__all__ = ["BACKEND", "available_backends", "get_kernel"]


def _load_compiled():
    try:
        from . import _kernel
    except ImportError:
        return None
    return _kernel


_COMPILED = _load_compiled()


def available_backends():
    return ("compiled", "python") if _COMPILED is not None else ("python",)


def get_kernel(name: str | None = None):
    """Return the kernel module for ``name`` (``compiled``, ``python`` or default)."""
    if name is None:
        name = os.environ.get("ERNWAVE_BACKEND", "").strip().lower() or None
    if name in (None, "compiled", "cython"):
        if _COMPILED is not None:
            return _COMPILED
        if name is not None:
            raise ImportError("compiled kernel is not built; reinstall the package")
        return _kernel_py
    if name in ("python", "py"):
        return _kernel_py
    raise ValueError(f"unknown backend {name!r}")


BACKEND = "compiled" if get_kernel() is not _kernel_py else "python"
