"""Kernel backend selection: compiled extension with numpy fallback.

The compiled module is preferred when importable.  ``CSIAUTH_KERNELS`` in
the environment forces a choice: ``compiled`` (raise if unavailable),
``python``, or ``auto`` (default).  ``benchmarks/bench_kernels.py`` compares
the two implementations head to head.
"""

from __future__ import annotations

import os

from . import kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - build-env dependent
    _compiled = None


def _select():
    choice = os.environ.get("CSIAUTH_KERNELS", "auto").lower()
    if choice == "python":
        return kernels_py, "python"
    if choice == "compiled":
        if _compiled is None:
            raise ImportError("CSIAUTH_KERNELS=compiled but csiauth.nn._kernels "
                              "is not built; reinstall or set CSIAUTH_KERNELS=python")
        return _compiled, "compiled"
    if _compiled is not None:
        return _compiled, "compiled"
    return kernels_py, "python"


_impl, _name = _select()


def active_backend() -> str:
    """Name of the kernel implementation in use: 'compiled' or 'python'."""
    return _name


def conv2d_valid(xpad, weight, bias=None):
    return _impl.conv2d_valid(xpad, weight, bias)


def conv2d_grad_weight(xpad, gy, kh, kw):
    return _impl.conv2d_grad_weight(xpad, gy, kh, kw)
