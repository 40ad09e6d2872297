"""Pure-numpy reference implementations of the hot convolution kernels.

Both kernels operate on pre-padded inputs and compute "valid" correlations;
padding policy lives in the calling layer.  The compiled Cython twin in
``_kernels.pyx`` implements the same contract.

The lowering is explicit im2col: k*k shifted slice copies into a
gemm-ready buffer, then one matrix multiply.
"""

from __future__ import annotations

import numpy as np


def _im2col(xpad: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Pack [B,Cin,Hp,Wp] into [Cin*kh*kw, B*H*W] for a valid correlation."""
    b, c, hp, wp = xpad.shape
    h, w = hp - kh + 1, wp - kw + 1
    cols = np.empty((c, kh, kw, b, h, w), dtype=xpad.dtype)
    xt = xpad.transpose(1, 0, 2, 3)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i:i + h, j:j + w]
    return cols.reshape(c * kh * kw, b * h * w)


def conv2d_valid(xpad: np.ndarray, weight: np.ndarray,
                 bias: np.ndarray | None = None) -> np.ndarray:
    """Valid cross-correlation: [B,Cin,Hp,Wp] x [Cout,Cin,kh,kw] -> [B,Cout,H,W]."""
    b = xpad.shape[0]
    cout, cin, kh, kw = weight.shape
    h, w = xpad.shape[2] - kh + 1, xpad.shape[3] - kw + 1
    cols = _im2col(xpad, kh, kw)
    y = (weight.reshape(cout, -1) @ cols).reshape(cout, b, h, w)
    y = np.ascontiguousarray(y.transpose(1, 0, 2, 3))
    if bias is not None:
        y += bias[None, :, None, None]
    return y


def conv2d_grad_weight(xpad: np.ndarray, gy: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Weight gradient of :func:`conv2d_valid` given upstream gradient ``gy``."""
    b, cout, h, w = gy.shape
    cin = xpad.shape[1]
    cols = _im2col(xpad, kh, kw)
    gmat = np.ascontiguousarray(gy.transpose(1, 0, 2, 3)).reshape(cout, -1)
    return (gmat @ cols.T).reshape(cout, cin, kh, kw)
