# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled implementations of the hot kernels.

Contracts match ctsforge.kernels.reference.  The dilated convolution is
expressed as one BLAS GEMM per (batch row, filter tap) over a contiguous
block of frames, which is where the win over the numpy tap loop comes
from on long utterances.  The sliding mean keeps a running window sum.
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef inline void _gemm_rowmajor(char ta, char tb, int m, int n, int kk,
                                real alpha, real* a, int lda,
                                real* b, int ldb,
                                real beta, real* c, int ldc) noexcept nogil:
    # Row-major C = alpha*op(A)@op(B) + beta*C via the column-major BLAS
    # identity C^T = op(B)^T op(A)^T: swap the operands and swap m with n.
    if real is float:
        sgemm(&tb, &ta, &n, &m, &kk, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)
    else:
        dgemm(&tb, &ta, &n, &m, &kk, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


def conv1d_forward(real[:, :, ::1] x, real[:, :, ::1] w,
                   real[::1] bias, int dilation):
    """Dilated valid convolution along time; see reference.conv1d_forward."""
    cdef int batch = <int> x.shape[0]
    cdef int t_in = <int> x.shape[1]
    cdef int c_in = <int> x.shape[2]
    cdef int taps = <int> w.shape[0]
    cdef int c_out = <int> w.shape[2]
    cdef int t_out = t_in - (taps - 1) * dilation
    cdef int b, i
    cdef real one = <real> 1.0
    if t_out < 1:
        raise ValueError(
            f"input of {t_in} frames too short for {taps} taps "
            f"at dilation {dilation}"
        )
    if <int> w.shape[1] != c_in or <int> bias.shape[0] != c_out:
        raise ValueError("filter or bias shape does not match input")
    if real is float:
        out_np = np.empty((batch, t_out, c_out), dtype=np.float32)
    else:
        out_np = np.empty((batch, t_out, c_out), dtype=np.float64)
    out_np[:] = np.asarray(bias)
    cdef real[:, :, ::1] out = out_np
    with nogil:
        for b in range(batch):
            for i in range(taps):
                _gemm_rowmajor(c'N', c'N', t_out, c_out, c_in,
                               one, &x[b, i * dilation, 0], c_in,
                               &w[i, 0, 0], c_out,
                               one, &out[b, 0, 0], c_out)
    return out_np


def conv1d_backward(real[:, :, ::1] x, real[:, :, ::1] w,
                    int dilation, real[:, :, ::1] grad_out):
    """Backward pass of conv1d_forward; see reference.conv1d_backward."""
    cdef int batch = <int> x.shape[0]
    cdef int c_in = <int> x.shape[2]
    cdef int taps = <int> w.shape[0]
    cdef int c_out = <int> w.shape[2]
    cdef int t_out = <int> grad_out.shape[1]
    cdef int b, i
    cdef real one = <real> 1.0
    grad_x_np = np.zeros_like(np.asarray(x))
    grad_w_np = np.zeros_like(np.asarray(w))
    grad_b_np = np.asarray(grad_out).sum(axis=(0, 1))
    cdef real[:, :, ::1] gx = grad_x_np
    cdef real[:, :, ::1] gw = grad_w_np
    with nogil:
        for b in range(batch):
            for i in range(taps):
                # grad_w[i] += x_block^T @ grad_out[b]
                _gemm_rowmajor(c'T', c'N', c_in, c_out, t_out,
                               one, &x[b, i * dilation, 0], c_in,
                               &grad_out[b, 0, 0], c_out,
                               one, &gw[i, 0, 0], c_out)
                # grad_x block += grad_out[b] @ w[i]^T
                _gemm_rowmajor(c'N', c'T', t_out, c_in, c_out,
                               one, &grad_out[b, 0, 0], c_out,
                               &w[i, 0, 0], c_out,
                               one, &gx[b, i * dilation, 0], c_in)
    return grad_x_np, grad_w_np, grad_b_np


def sliding_window_mean(double[:, ::1] x, int window):
    """Clamped full-width sliding mean; see reference.sliding_window_mean."""
    cdef Py_ssize_t t = x.shape[0]
    cdef Py_ssize_t f = x.shape[1]
    cdef Py_ssize_t i, j, a, cur, limit, radius
    cdef double inv
    if window < 1:
        raise ValueError("window must be at least one row")
    out_np = np.empty((t, f), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    acc_np = np.zeros(f, dtype=np.float64)
    cdef double[::1] acc = acc_np
    if window >= t:
        with nogil:
            for i in range(t):
                for j in range(f):
                    acc[j] += x[i, j]
            inv = 1.0 / <double> t
            for i in range(t):
                for j in range(f):
                    out[i, j] = acc[j] * inv
        return out_np
    radius = window // 2
    limit = t - window
    inv = 1.0 / <double> window
    with nogil:
        for i in range(window):
            for j in range(f):
                acc[j] += x[i, j]
        cur = 0
        for i in range(t):
            a = i - radius
            if a < 0:
                a = 0
            if a > limit:
                a = limit
            while cur < a:
                for j in range(f):
                    acc[j] += x[cur + window, j] - x[cur, j]
                cur += 1
            for j in range(f):
                out[i, j] = acc[j] * inv
    return out_np
