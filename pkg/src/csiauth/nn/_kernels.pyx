# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution kernels: C im2col packing + in-C BLAS gemm.

Same contract as ``kernels_py`` (valid correlation on pre-padded inputs,
float32/float64); the packing, matrix products and output transposes all run
without touching the Python interpreter.
"""

import numpy as np

cimport cython
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef void _gemm_rm(real* a, real* b, real* c,
                   int m, int n, int k, bint trans_b) noexcept nogil:
    """Row-major C[m,n] = A[m,k] @ op(B); op(B) is B[k,n] or (trans) B[n,k]."""
    cdef float alpha_s = 1.0, beta_s = 0.0
    cdef double alpha_d = 1.0, beta_d = 0.0
    # column-major trick: compute C^T = op(B)^T @ A^T
    cdef char tb = b'T' if trans_b else b'N'
    cdef char tn = b'N'
    cdef int ldb = k if trans_b else n
    if real is float:
        sgemm(&tb, &tn, &n, &m, &k, &alpha_s, <float*> b, &ldb,
              <float*> a, &k, &beta_s, <float*> c, &n)
    else:
        dgemm(&tb, &tn, &n, &m, &k, &alpha_d, <double*> b, &ldb,
              <double*> a, &k, &beta_d, <double*> c, &n)


cdef void _pack_cols(real[:, :, :, ::1] xpad, real[:, ::1] cols,
                     Py_ssize_t kh, Py_ssize_t kw,
                     Py_ssize_t h, Py_ssize_t w) noexcept nogil:
    """cols[(ci*kh+i)*kw+j, (b*h+y)*w + x] = xpad[b, ci, y+i, x+j]."""
    cdef Py_ssize_t b_n = xpad.shape[0], c_n = xpad.shape[1]
    cdef Py_ssize_t b, ci, i, j, y, x, row
    for ci in range(c_n):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for b in range(b_n):
                    for y in range(h):
                        for x in range(w):
                            cols[row, (b * h + y) * w + x] = xpad[b, ci, y + i, x + j]


cdef void _scatter_out(real[:, ::1] flat, real[:, :, :, ::1] y,
                       real* bias, bint has_bias) noexcept nogil:
    """[Cout, B*H*W] -> [B, Cout, H, W] (+ bias)."""
    cdef Py_ssize_t b_n = y.shape[0], c_n = y.shape[1]
    cdef Py_ssize_t hw = y.shape[2] * y.shape[3]
    cdef Py_ssize_t b, co, p
    cdef real add
    for b in range(b_n):
        for co in range(c_n):
            add = bias[co] if has_bias else <real> 0.0
            for p in range(hw):
                (<real*> &y[b, co, 0, 0])[p] = flat[co, b * hw + p] + add


cdef void _gather_gy(real[:, :, :, ::1] gy, real[:, ::1] flat) noexcept nogil:
    """[B, Cout, H, W] -> [Cout, B*H*W]."""
    cdef Py_ssize_t b_n = gy.shape[0], c_n = gy.shape[1]
    cdef Py_ssize_t hw = gy.shape[2] * gy.shape[3]
    cdef Py_ssize_t b, co, p
    for b in range(b_n):
        for co in range(c_n):
            for p in range(hw):
                flat[co, b * hw + p] = (<real*> &gy[b, co, 0, 0])[p]


def conv2d_valid(xpad, weight, bias=None):
    xpad = np.ascontiguousarray(xpad)
    weight = np.ascontiguousarray(weight.astype(xpad.dtype, copy=False))
    cout, cin, kh, kw = weight.shape
    b = xpad.shape[0]
    h = xpad.shape[2] - kh + 1
    w = xpad.shape[3] - kw + 1
    cols = np.empty((cin * kh * kw, b * h * w), dtype=xpad.dtype)
    flat = np.empty((cout, b * h * w), dtype=xpad.dtype)
    y = np.empty((b, cout, h, w), dtype=xpad.dtype)
    has_bias = bias is not None
    bias_arr = (np.ascontiguousarray(bias, dtype=xpad.dtype) if has_bias
                else np.zeros(cout, dtype=xpad.dtype))
    if xpad.dtype == np.float32:
        _conv_fwd[float](xpad, weight.reshape(cout, -1), cols, flat, y,
                         bias_arr, has_bias, kh, kw, h, w)
    else:
        _conv_fwd[double](xpad, weight.reshape(cout, -1), cols, flat, y,
                          bias_arr, has_bias, kh, kw, h, w)
    return y


cdef void _conv_fwd(real[:, :, :, ::1] xpad, real[:, ::1] wmat,
                    real[:, ::1] cols, real[:, ::1] flat,
                    real[:, :, :, ::1] y, real[::1] bias_arr, bint has_bias,
                    Py_ssize_t kh, Py_ssize_t kw,
                    Py_ssize_t h, Py_ssize_t w) noexcept nogil:
    _pack_cols(xpad, cols, kh, kw, h, w)
    _gemm_rm(&wmat[0, 0], &cols[0, 0], &flat[0, 0],
             <int> wmat.shape[0], <int> cols.shape[1], <int> cols.shape[0], False)
    _scatter_out(flat, y, &bias_arr[0], has_bias)


def conv2d_grad_weight(xpad, gy, int kh, int kw):
    xpad = np.ascontiguousarray(xpad)
    gy = np.ascontiguousarray(gy.astype(xpad.dtype, copy=False))
    b, cout = gy.shape[0], gy.shape[1]
    cin = xpad.shape[1]
    h, w = gy.shape[2], gy.shape[3]
    cols = np.empty((cin * kh * kw, b * h * w), dtype=xpad.dtype)
    gmat = np.empty((cout, b * h * w), dtype=xpad.dtype)
    dw = np.empty((cout, cin * kh * kw), dtype=xpad.dtype)
    if xpad.dtype == np.float32:
        _conv_gw[float](xpad, gy, cols, gmat, dw, kh, kw, h, w)
    else:
        _conv_gw[double](xpad, gy, cols, gmat, dw, kh, kw, h, w)
    return dw.reshape(cout, cin, kh, kw)


cdef void _conv_gw(real[:, :, :, ::1] xpad, real[:, :, :, ::1] gy,
                   real[:, ::1] cols, real[:, ::1] gmat, real[:, ::1] dw,
                   Py_ssize_t kh, Py_ssize_t kw,
                   Py_ssize_t h, Py_ssize_t w) noexcept nogil:
    _pack_cols(xpad, cols, kh, kw, h, w)
    _gather_gy(gy, gmat)
    _gemm_rm(&gmat[0, 0], &cols[0, 0], &dw[0, 0],
             <int> gmat.shape[0], <int> cols.shape[0], <int> cols.shape[1], True)
