"""BLAS thread control.

The network tensors here are small (tens of channels on 8x32 maps), where
multi-threaded BLAS loses far more to per-call synchronization than it gains
- measured ~5x on a 2-core host.  Pinning BLAS to one thread inside training
and inference loops both removes that overhead and makes results bitwise
independent of the host's core count.  Set CSIAUTH_BLAS_THREADS to override.
"""

from __future__ import annotations

import contextlib
import os

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def blas_single_thread():
    """Context manager limiting BLAS pools for the enclosed hot loop."""
    n = int(os.environ.get("CSIAUTH_BLAS_THREADS", "1"))
    if threadpool_limits is None or n <= 0:
        return contextlib.nullcontext()
    return threadpool_limits(limits=n, user_api="blas")
