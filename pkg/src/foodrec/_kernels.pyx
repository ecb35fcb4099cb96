# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: convolution patch packing and region labeling.

Convolution itself is a GEMM over an im2col patch matrix; BLAS does the
GEMM either way, so the compiled win is the packing/scatter step, which is
pure memory movement. Region labeling is a flood fill whose per-pixel cost
is all interpreter overhead in the fallback; here it is a C loop.

Layouts match ``_kernels_np``: activations NCHW float32, kernels OIHW
float32, patch matrix (N*Ho*Wo, C*kh*kw) with columns ordered (c, kh, kw).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def _out_size(int n, int k, int stride, int pad):
    return (n + 2 * pad - k) // stride + 1


cdef void _pack(float[:, ::1] cols, const float[:, :, :, ::1] x,
                Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                Py_ssize_t pad, Py_ssize_t ho, Py_ssize_t wo) noexcept nogil:
    cdef Py_ssize_t nn = x.shape[0], ci = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t n, i, j, c, r, s, row, col, hi, wi
    for n in range(nn):
        for i in range(ho):
            for j in range(wo):
                row = (n * ho + i) * wo + j
                col = 0
                for c in range(ci):
                    for r in range(kh):
                        hi = i * stride - pad + r
                        if 0 <= hi < h:
                            for s in range(kw):
                                wi = j * stride - pad + s
                                if 0 <= wi < w:
                                    cols[row, col] = x[n, c, hi, wi]
                                else:
                                    cols[row, col] = 0.0
                                col += 1
                        else:
                            for s in range(kw):
                                cols[row, col] = 0.0
                                col += 1


cdef void _scatter(const float[:, ::1] cols, float[:, :, :, ::1] dx,
                   Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                   Py_ssize_t pad, Py_ssize_t ho,
                   Py_ssize_t wo) noexcept nogil:
    cdef Py_ssize_t nn = dx.shape[0], ci = dx.shape[1]
    cdef Py_ssize_t h = dx.shape[2], w = dx.shape[3]
    cdef Py_ssize_t n, i, j, c, r, s, row, col, hi, wi
    for n in range(nn):
        for i in range(ho):
            for j in range(wo):
                row = (n * ho + i) * wo + j
                col = 0
                for c in range(ci):
                    for r in range(kh):
                        hi = i * stride - pad + r
                        for s in range(kw):
                            wi = j * stride - pad + s
                            if 0 <= hi < h and 0 <= wi < w:
                                dx[n, c, hi, wi] += cols[row, col]
                            col += 1


def _im2col(x, Py_ssize_t kh, Py_ssize_t kw, int stride, int pad):
    """(N,C,H,W) -> (N*Ho*Wo, C*kh*kw) patch matrix."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ho = _out_size(x.shape[2], kh, stride, pad)
    cdef Py_ssize_t wo = _out_size(x.shape[3], kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ValueError("empty convolution output")
    cols = np.empty((n * ho * wo, c * kh * kw), dtype=np.float32)
    _pack(cols, x, kh, kw, stride, pad, ho, wo)
    return cols, ho, wo


def conv2d_forward(x, w, int stride, int pad):
    """2-D convolution (cross-correlation), no bias.

    x: (N, C, H, W) float32, w: (O, C, kh, kw) float32.
    Returns (N, O, Ho, Wo) float32.
    """
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    if x.shape[1] != w.shape[1]:
        raise ValueError("weight in_channels mismatch")
    cdef Py_ssize_t n = x.shape[0], o = w.shape[0]
    cols, ho, wo = _im2col(x, w.shape[2], w.shape[3], stride, pad)
    y = cols @ w.reshape(o, -1).T
    return np.ascontiguousarray(
        y.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), dtype=np.float32)


def conv2d_backward_weights(dy, x, w_shape, int stride, int pad):
    """Gradient of the loss w.r.t. the kernel. dy: (N, O, Ho, Wo)."""
    o, c, kh, kw = w_shape
    if dy.shape[0] != x.shape[0] or dy.shape[1] != o:
        raise ValueError("gradient/input shape mismatch")
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    g = dy.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = g.T @ cols
    return np.ascontiguousarray(dw.reshape(o, c, kh, kw), dtype=np.float32)


def conv2d_backward_input(dy, w, x_shape, int stride, int pad):
    """Gradient of the loss w.r.t. the input. Returns (N, C, H, W)."""
    cdef Py_ssize_t o = w.shape[0]
    cdef Py_ssize_t ho = dy.shape[2], wo = dy.shape[3]
    if dy.shape[1] != o or x_shape[1] != w.shape[1]:
        raise ValueError("gradient/weight shape mismatch")
    g = dy.transpose(0, 2, 3, 1).reshape(-1, o)
    dcols = np.ascontiguousarray(g @ w.reshape(o, -1), dtype=np.float32)
    dx = np.zeros(tuple(x_shape), dtype=np.float32)
    _scatter(dcols, dx, w.shape[2], w.shape[3], stride, pad, ho, wo)
    return dx


def label_components(mask):
    """8-connected labeling of a boolean mask.

    Returns (labels, count): labels is int32, background 0, regions numbered
    1..count in row-major order of first encounter.
    """
    m_arr = np.ascontiguousarray(mask, dtype=np.uint8)
    if m_arr.ndim != 2:
        raise ValueError("mask must be 2-D")
    cdef const unsigned char[:, ::1] m = m_arr
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    stack_arr = np.empty(h * w, dtype=np.intp)
    cdef Py_ssize_t[::1] stack = stack_arr
    cdef Py_ssize_t sr, sc, r, c, rr, cc, top
    cdef int count = 0
    with nogil:
        for sr in range(h):
            for sc in range(w):
                if m[sr, sc] == 0 or labels[sr, sc] != 0:
                    continue
                count += 1
                labels[sr, sc] = count
                top = 0
                stack[top] = sr * w + sc
                top += 1
                while top > 0:
                    top -= 1
                    r = stack[top] // w
                    c = stack[top] % w
                    for rr in range(r - 1 if r > 0 else 0,
                                    r + 2 if r + 2 <= h else h):
                        for cc in range(c - 1 if c > 0 else 0,
                                        c + 2 if c + 2 <= w else w):
                            if m[rr, cc] != 0 and labels[rr, cc] == 0:
                                labels[rr, cc] = count
                                stack[top] = rr * w + cc
                                top += 1
    return labels_arr, count
