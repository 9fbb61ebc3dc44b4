"""Batched float64 layer primitives with hand-derived backward passes.

Shapes follow the (batch, channels, mel, time) convention. Convolutions
are stride-1 with "same" padding; pooling windows tile the input exactly;
the transposed convolution runs along the time axis only.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padded stride-1 convolution.

    x: (B, C, H, W); w: (Co, C, kh, kw) with odd kernel; b: (Co,).
    Returns (out, cache) with out shaped (B, Co, H, W).
    """
    batch, _, height, width = x.shape
    c_out, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        batch, height * width, -1
    )
    out = cols @ w.reshape(c_out, -1).T + b
    out = out.transpose(0, 2, 1).reshape(batch, c_out, height, width)
    return out, (x.shape, cols, w)


def conv2d_backward(dout: np.ndarray, cache):
    """Gradients of conv2d w.r.t. input, weights, and bias."""
    x_shape, cols, w = cache
    batch, channels, height, width = x_shape
    c_out, _, kh, kw = w.shape

    dflat = dout.reshape(batch, c_out, height * width).transpose(0, 2, 1)
    dw = np.tensordot(dflat, cols, axes=([0, 1], [0, 1])).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))

    dcols = dflat @ w.reshape(c_out, -1)
    dcols = dcols.reshape(batch, height, width, channels, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    dxp = np.zeros((batch, channels, height + kh - 1, width + kw - 1))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + height, j : j + width] += dcols[:, :, :, :, i, j]
    dx = dxp[:, :, kh // 2 : kh // 2 + height, kw // 2 : kw // 2 + width]
    return dx, dw, db


def maxpool2d(x: np.ndarray, pool_h: int, pool_w: int):
    """Non-overlapping max pooling; window dims must tile the input.

    Ties resolve to the first element in row-major window order.
    """
    batch, channels, height, width = x.shape
    if height % pool_h or width % pool_w:
        raise ValueError(f"pool {pool_h}x{pool_w} does not tile input {height}x{width}")
    h_out, w_out = height // pool_h, width // pool_w
    tiles = x.reshape(batch, channels, h_out, pool_h, w_out, pool_w)
    tiles = tiles.transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, h_out, w_out, -1)
    idx = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, pool_h, pool_w, idx)


def maxpool2d_backward(dout: np.ndarray, cache):
    x_shape, pool_h, pool_w, idx = cache
    batch, channels, height, width = x_shape
    h_out, w_out = height // pool_h, width // pool_w
    dtiles = np.zeros((batch, channels, h_out, w_out, pool_h * pool_w))
    np.put_along_axis(dtiles, idx[..., None], dout[..., None], axis=-1)
    dtiles = dtiles.reshape(batch, channels, h_out, w_out, pool_h, pool_w)
    return dtiles.transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)


def time_deconv(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    """Transposed convolution along time: (B, C, T) -> (B, Co, (T-1)*s + k).

    w: (C, Co, k). out[b, o, t*s + j] accumulates x[b, c, t] * w[c, o, j].
    """
    batch, _, t_in = x.shape
    _, c_out, kernel = w.shape
    t_out = (t_in - 1) * stride + kernel
    taps = np.tensordot(x, w, axes=(1, 0))  # (B, T, Co, k)
    out = np.zeros((batch, c_out, t_out))
    for j in range(kernel):
        out[:, :, j : j + stride * t_in : stride] += taps[:, :, :, j].transpose(0, 2, 1)
    out += b[:, None]
    return out, (x, w, stride)


def time_deconv_backward(dout: np.ndarray, cache):
    x, w, stride = cache
    batch, _, t_in = x.shape
    _, c_out, kernel = w.shape
    dtaps = np.empty((batch, c_out, kernel, t_in))
    for j in range(kernel):
        dtaps[:, :, j, :] = dout[:, :, j : j + stride * t_in : stride]
    dw = np.tensordot(x, dtaps, axes=([0, 2], [0, 3]))  # (C, Co, k)
    db = dout.sum(axis=(0, 2))
    dx = np.tensordot(dtaps, w, axes=([1, 2], [1, 2]))  # (B, T, C)
    return dx.transpose(0, 2, 1), dw, db


def relu(x: np.ndarray):
    return np.maximum(x, 0.0), x


def relu_backward(dout: np.ndarray, cache) -> np.ndarray:
    return dout * (cache > 0)


def softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    """Numerically stable softmax along `axis`."""
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)
