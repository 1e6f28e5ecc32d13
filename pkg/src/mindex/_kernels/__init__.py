"""Stage-1 kernel backends.

The compiled Cython kernel is preferred when present; otherwise the NumPy
twin is used. Both implement the same loop and consume identical random
streams for a fixed seed. Selection:

    MIL_BACKEND=cython   require the compiled kernel (ImportError if missing)
    MIL_BACKEND=python   force the NumPy fallback
    unset / auto         compiled if available, else NumPy

Build the compiled kernel in place with `python setup.py build_ext --inplace`.
"""

from __future__ import annotations

import os

from . import _stage1_np

STATUS_OK = _stage1_np.STATUS_OK
STATUS_DEGENERATE = _stage1_np.STATUS_DEGENERATE

LINK_KIND_CODES = {"h2_h2L": 0, "h2_only": 1, "abs": 2}


def _load_cython():
    from . import _stage1_cy  # noqa: PLC0415

    return _stage1_cy


def available_backends() -> dict:
    """Name -> kernel module for every importable backend."""
    out = {"python": _stage1_np}
    try:
        out["cython"] = _load_cython()
    except ImportError:
        pass
    return out


def select_backend(name: str | None = None):
    """Resolve a backend by name ('cython', 'python', 'auto' or None)."""
    if name is None:
        name = os.environ.get("MIL_BACKEND", "auto").lower()
    if name == "python":
        return "python", _stage1_np
    if name == "cython":
        return "cython", _load_cython()
    if name == "auto":
        try:
            return "cython", _load_cython()
        except ImportError:
            return "python", _stage1_np
    raise ValueError(f"unknown backend {name!r} (use 'cython', 'python' or 'auto')")


BACKEND_NAME, _backend = select_backend()
run_stage1 = _backend.run_stage1
