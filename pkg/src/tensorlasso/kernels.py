"""Kernel selection: the compiled extension when importable, else numpy.

Set ``TENSORLASSO_PURE=1`` to force the pure-Python fallback.
"""
import os

from . import _core_py

BACKEND = "python"
_impl = _core_py

if os.environ.get("TENSORLASSO_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

group_bcd = _impl.group_bcd
kkt = _impl.kkt


def backend_module(name: str):
    """Return the kernel module named ``"cython"`` or ``"python"``."""
    if name == "python":
        return _core_py
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
