"""Selection between the compiled trial kernel and the numpy fallback.

The compiled extension (droopmle._kernels, Cython + LAPACK dgels) is
preferred when it imported cleanly; otherwise the vectorized numpy
implementation is used. Override with the environment variable
DROOPMLE_BACKEND=python|compiled before import, or set_backend() at
runtime (mainly for tests and benchmarks).
"""

from __future__ import annotations

import os

from . import _kernels_py

_COMPILED = None
try:
    from . import _kernels as _compiled_module

    _COMPILED = _compiled_module
except ImportError:
    _COMPILED = None


def _initial():
    choice = os.environ.get("DROOPMLE_BACKEND", "").strip().lower()
    if choice == "python":
        return _kernels_py
    if choice == "compiled":
        if _COMPILED is None:
            raise ImportError(
                "DROOPMLE_BACKEND=compiled but the extension is not built"
            )
        return _COMPILED
    if choice:
        raise ValueError(f"unknown DROOPMLE_BACKEND {choice!r}")
    return _COMPILED if _COMPILED is not None else _kernels_py


_active = _initial()


def backend_name() -> str:
    """Name of the active kernel implementation."""
    return _active.BACKEND_NAME


def available_backends() -> tuple:
    names = ["python"]
    if _COMPILED is not None:
        names.append("compiled")
    return tuple(names)


def set_backend(name: str):
    """Switch kernels at runtime; returns the previous backend name."""
    global _active
    previous = _active.BACKEND_NAME
    if name == "python":
        _active = _kernels_py
    elif name == "compiled":
        if _COMPILED is None:
            raise ValueError("compiled backend is not available")
        _active = _COMPILED
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def estimate_batch(*args, **kwargs):
    """Dispatch to the active kernel's estimate_batch."""
    return _active.estimate_batch(*args, **kwargs)
