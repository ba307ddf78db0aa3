"""2-D convolution primitives (im2col) shared by the backbone, the
segmentation network forward pass, and the gradient tape.

All convolutions are cross-correlations over (channels, w, h) arrays with
square kernels, zero padding, and optional dilation. No stride: every layer
of the segmentation network preserves spatial extents.
"""

from __future__ import annotations

import numpy as np


def conv_out_extent(n: int, k: int, dilation: int, pad: int) -> int:
    return n + 2 * pad - dilation * (k - 1)


def _im2col(xpad: np.ndarray, k: int, d: int, out_w: int, out_h: int) -> np.ndarray:
    c = xpad.shape[0]
    cols = np.empty((c, k, k, out_w, out_h), dtype=np.float64)
    for di in range(k):
        for dj in range(k):
            cols[:, di, dj] = xpad[:, d * di : d * di + out_w, d * dj : d * dj + out_h]
    return cols.reshape(c * k * k, out_w * out_h)


def _col2im(gcols: np.ndarray, c: int, k: int, d: int, out_w: int, out_h: int,
            pad_w: int, pad_h: int) -> np.ndarray:
    g = gcols.reshape(c, k, k, out_w, out_h)
    gx = np.zeros((c, pad_w, pad_h), dtype=np.float64)
    for di in range(k):
        for dj in range(k):
            gx[:, d * di : d * di + out_w, d * dj : d * dj + out_h] += g[:, di, dj]
    return gx


def conv2d_with_cols(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                     dilation: int = 1, pad: int = 0):
    """Cross-correlate and also return the im2col matrix for reuse by the
    backward pass."""
    cin, w, h = x.shape
    cout, cin_w, k, k2 = weight.shape
    if cin != cin_w or k != k2:
        raise ValueError(f"weight shape {weight.shape} incompatible with input {x.shape}")
    out_w = conv_out_extent(w, k, dilation, pad)
    out_h = conv_out_extent(h, k, dilation, pad)
    if out_w < 1 or out_h < 1:
        raise ValueError("kernel reach exceeds padded input extents")
    xpad = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xpad, k, dilation, out_w, out_h)
    out = weight.reshape(cout, -1) @ cols
    out += bias[:, None]
    return out.reshape(cout, out_w, out_h), cols


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
           dilation: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlate ``x`` (Cin, W, H) with ``weight`` (Cout, Cin, k, k)."""
    return conv2d_with_cols(x, weight, bias, dilation, pad)[0]


def conv2d_backward(x: np.ndarray, weight: np.ndarray, gout: np.ndarray,
                    dilation: int = 1, pad: int = 0, cols: np.ndarray = None):
    """Gradients of ``conv2d`` w.r.t. input, weight, and bias."""
    cin, w, h = x.shape
    cout, _, k, _ = weight.shape
    out_w, out_h = gout.shape[1], gout.shape[2]
    pad_w, pad_h = w + 2 * pad, h + 2 * pad
    if cols is None:
        xpad = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
        cols = _im2col(xpad, k, dilation, out_w, out_h)
    gout_mat = gout.reshape(cout, -1)
    gweight = (gout_mat @ cols.T).reshape(weight.shape)
    gbias = gout_mat.sum(axis=1)
    gcols = weight.reshape(cout, -1).T @ gout_mat
    gxpad = _col2im(gcols, cin, k, dilation, out_w, out_h, pad_w, pad_h)
    gx = gxpad[:, pad : pad + w, pad : pad + h] if pad else gxpad
    return gx, gweight, gbias


def avgpool2(x: np.ndarray) -> np.ndarray:
    """2x2 average pooling; extents must be even."""
    c, w, h = x.shape
    if w % 2 or h % 2:
        raise ValueError(f"avgpool2 needs even extents, got {(w, h)}")
    return x.reshape(c, w // 2, 2, h // 2, 2).mean(axis=(2, 4))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
