"""NumPy fallback for the convolution kernels (im2col + BLAS matmul).

Mirrors the public surface of the compiled core in ``_kernels.pyx``. All
arrays are float32, C-contiguous, NCHW for activations and OIHW for weights.
"""

import numpy as np


def _out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def _im2col(x, kh, kw, stride, pad):
    """(N,C,H,W) -> (N*Ho*Wo, C*kh*kw) patch matrix."""
    n, c, h, w = x.shape
    ho = _out_size(h, kh, stride, pad)
    wo = _out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]            # (N, C, Ho, Wo, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols, dtype=np.float32), ho, wo


def conv2d_forward(x, w, stride, pad):
    """2-D convolution (cross-correlation), no bias.

    x: (N, C, H, W) float32, w: (O, C, kh, kw) float32.
    Returns (N, O, Ho, Wo) float32.
    """
    n = x.shape[0]
    o, _, kh, kw = w.shape
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    y = cols @ w.reshape(o, -1).T                   # (N*Ho*Wo, O)
    return np.ascontiguousarray(
        y.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), dtype=np.float32)


def conv2d_backward_weights(dy, x, w_shape, stride, pad):
    """Gradient of the loss w.r.t. the kernel. dy: (N, O, Ho, Wo)."""
    o, c, kh, kw = w_shape
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    g = dy.transpose(0, 2, 3, 1).reshape(-1, o)     # (N*Ho*Wo, O)
    dw = g.T @ cols
    return np.ascontiguousarray(dw.reshape(o, c, kh, kw), dtype=np.float32)


def conv2d_backward_input(dy, w, x_shape, stride, pad):
    """Gradient of the loss w.r.t. the input. Returns (N, C, H, W)."""
    n, c, h, w_in = x_shape
    o, _, kh, kw = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    g = dy.transpose(0, 2, 3, 1).reshape(-1, o)
    dcols = (g @ w.reshape(o, -1)).reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * pad, w_in + 2 * pad), dtype=np.float32)
    # scatter-add per kernel tap; slices are disjoint only for stride >= k
    for a in range(kh):
        ha = a + stride * ho
        for b in range(kw):
            wb = b + stride * wo
            dxp[:, :, a:ha:stride, b:wb:stride] += \
                dcols[:, :, :, :, a, b].transpose(0, 3, 1, 2)
    if pad:
        return np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + w_in])
    return dxp


def label_components(mask):
    """8-connected labeling of a boolean mask.

    Returns (labels, count): labels is int32, background 0, regions numbered
    1..count in row-major order of first encounter.
    """
    m = np.ascontiguousarray(mask).astype(bool)
    if m.ndim != 2:
        raise ValueError("mask must be 2-D")
    h, w = m.shape
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    for sr in range(h):
        for sc in range(w):
            if not m[sr, sc] or labels[sr, sc]:
                continue
            count += 1
            labels[sr, sc] = count
            stack = [(sr, sc)]
            while stack:
                r, c = stack.pop()
                for rr in range(max(r - 1, 0), min(r + 2, h)):
                    for cc in range(max(c - 1, 0), min(c + 2, w)):
                        if m[rr, cc] and not labels[rr, cc]:
                            labels[rr, cc] = count
                            stack.append((rr, cc))
    return labels, count
