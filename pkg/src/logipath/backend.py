"""Numeric kernel backend selection.

The compiled Cython module is preferred when importable; the numpy
module is the fallback.  ``LOGIPATH_BACKEND=numpy`` or ``=c`` forces a
choice at import time, and :func:`use` switches at runtime (used by the
benchmark).  Both implementations are deterministic; they agree to
floating-point tolerance but not necessarily bit for bit.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_numpy

_FORCE = os.environ.get("LOGIPATH_BACKEND", "").strip().lower()

try:
    from . import _kernels_c
except ImportError:
    _kernels_c = None  # type: ignore[assignment]

_ALIASES = {
    "": None,
    "c": "c",
    "compiled": "c",
    "cython": "c",
    "numpy": "numpy",
    "python": "numpy",
}


def _resolve(name: str) -> ModuleType:
    alias = _ALIASES.get(name.strip().lower(), "")
    if alias == "c":
        if _kernels_c is None:
            raise RuntimeError(
                "compiled kernel backend requested but the extension is "
                "not built; install with a C compiler or unset "
                "LOGIPATH_BACKEND"
            )
        return _kernels_c
    if alias == "numpy":
        return _kernels_numpy
    if alias is None:
        return _kernels_c if _kernels_c is not None else _kernels_numpy
    raise ValueError(f"unknown backend {name!r}; use 'c' or 'numpy'")


_active: ModuleType = _resolve(_FORCE)


def active() -> ModuleType:
    """The kernel module used by tensor ops."""
    return _active


def active_name() -> str:
    return _active.NAME


def use(name: str) -> str:
    """Switch backends at runtime; returns the previous backend name."""
    global _active
    previous = _active.NAME
    _active = _resolve(name)
    return previous


def available() -> list[str]:
    names = ["numpy"]
    if _kernels_c is not None:
        names.insert(0, "c")
    return names
