"""Kernel selection.

The compiled extension ``parasplit._kernels`` is used when it imports;
otherwise, or when ``PARASPLIT_PURE_PYTHON`` is set to a truthy value, the
NumPy/SciPy versions in :mod:`parasplit._fallback` take over.  Both expose
the same functions, so callers only ever go through :func:`get_kernels`.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_TRUTHY = ("1", "true", "yes", "on")


def compiled_available() -> bool:
    return _compiled is not None


def _default_name() -> str:
    if os.environ.get("PARASPLIT_PURE_PYTHON", "").lower() in _TRUTHY:
        return "python"
    return "compiled" if _compiled is not None else "python"


_active = _default_name()


def get_kernels(name: str | None = None) -> ModuleType:
    """Return the kernel module ``name`` ('compiled' or 'python'), or the
    active one when ``name`` is None."""
    name = name or _active
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    if name == "python":
        return _fallback
    raise ValueError(f"unknown kernel backend {name!r}")


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    """Switch the process-wide backend (used by the benchmark and tests)."""
    global _active
    get_kernels(name)
    _active = name
