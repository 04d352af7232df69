"""Differentiable primitives on (channels, height, width) arrays.

A feature map is a plain numpy array of shape ``(C, H, W)``.  Every forward
function is pure; every backward function is the exact vector-Jacobian
product of its forward.  Arrays keep the dtype they come in with (float32
in production, float64 is accepted so gradients can be checked tightly).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


def check_feature_map(x, name="input"):
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"{name} must be (channels, height, width), got shape {x.shape}")
    if min(x.shape) <= 0:
        raise ShapeError(f"{name} has an empty axis: {x.shape}")
    return x


def _padding4(padding):
    """Normalize padding to (top, bottom, left, right)."""
    if np.isscalar(padding):
        p = int(padding)
        return (p, p, p, p)
    padding = tuple(int(p) for p in padding)
    if len(padding) == 2:
        return (padding[0], padding[0], padding[1], padding[1])
    if len(padding) == 4:
        return padding
    raise ValueError(f"padding must be an int, (ph, pw) or (top, bottom, left, right), got {padding}")


def conv_output_size(size, k, pad_lo, pad_hi, stride):
    return (size + pad_lo + pad_hi - k) // stride + 1


def _im2col(x, kh, kw, pad, stride):
    top, bottom, left, right = pad
    xp = np.pad(x, ((0, 0), (top, bottom), (left, right)))
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    c, ho, wo = windows.shape[:3]
    # rows ordered (inC, kH, kW) so each output element reduces inC-major
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)
    return cols, ho, wo


def conv2d_forward(x, kernel, bias, padding=0, stride=1):
    """Cross-correlation of ``x`` (C, H, W) with ``kernel`` (outC, inC, kH, kW)."""
    x = check_feature_map(x)
    kernel = np.asarray(kernel)
    bias = np.asarray(bias)
    if kernel.ndim != 4 or kernel.shape[1] != x.shape[0]:
        raise ShapeError(f"kernel shape {kernel.shape} does not match input shape {x.shape}")
    if bias.shape != (kernel.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} does not match kernel shape {kernel.shape}")
    if stride < 1:
        raise ValueError("stride must be positive")
    pad = _padding4(padding)
    _, h, w = x.shape
    outc, _, kh, kw = kernel.shape
    if h + pad[0] + pad[1] < kh or w + pad[2] + pad[3] < kw:
        raise ShapeError(f"padded input shape {x.shape} (padding {pad}) is smaller than kernel shape {kernel.shape}")
    cols, ho, wo = _im2col(x, kh, kw, pad, stride)
    out = kernel.reshape(outc, -1).astype(x.dtype, copy=False) @ cols
    out += bias.astype(x.dtype, copy=False)[:, None]
    return out.reshape(outc, ho, wo)


def conv2d_backward(x, kernel, upstream, padding=0, stride=1):
    """Return ``(grad_input, grad_kernel, grad_bias)`` for conv2d_forward."""
    x = check_feature_map(x)
    kernel = np.asarray(kernel)
    upstream = check_feature_map(upstream, "upstream")
    pad = _padding4(padding)
    c, h, w = x.shape
    outc, inc, kh, kw = kernel.shape
    if inc != c:
        raise ShapeError(f"kernel shape {kernel.shape} does not match input shape {x.shape}")
    ho = conv_output_size(h, kh, pad[0], pad[1], stride)
    wo = conv_output_size(w, kw, pad[2], pad[3], stride)
    if upstream.shape != (outc, ho, wo):
        raise ShapeError(f"upstream shape {upstream.shape} != forward output shape {(outc, ho, wo)}")
    dtype = np.result_type(x.dtype, upstream.dtype)
    up = upstream.reshape(outc, -1).astype(dtype, copy=False)
    cols, _, _ = _im2col(x.astype(dtype, copy=False), kh, kw, pad, stride)
    grad_kernel = (up @ cols.T).reshape(kernel.shape)
    grad_bias = up.sum(axis=1)
    dcols = (kernel.reshape(outc, -1).astype(dtype, copy=False).T @ up).reshape(c, kh, kw, ho, wo)
    top, bottom, left, right = pad
    gp = np.zeros((c, h + top + bottom, w + left + right), dtype=dtype)
    for i in range(kh):
        for j in range(kw):
            gp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, i, j]
    grad_input = gp[:, top:top + h, left:left + w]
    return np.ascontiguousarray(grad_input), grad_kernel, grad_bias


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, upstream):
    x = np.asarray(x)
    upstream = np.asarray(upstream)
    if x.shape != upstream.shape:
        raise ShapeError(f"relu upstream shape {upstream.shape} != input shape {x.shape}")
    return np.where(x > 0, upstream, np.zeros((), dtype=upstream.dtype))


def _replicate_pad_even(x):
    _, h, w = x.shape
    if h % 2 or w % 2:
        x = np.pad(x, ((0, 0), (0, h % 2), (0, w % 2)), mode="edge")
    return x


def pool_forward(x, mode="max"):
    """2x2 / stride 2 pooling.  Odd extents are replicate-padded first.

    Returns ``(out, argmax)``; ``argmax`` is the flat index (0..3) of the
    winner inside each window for max mode and ``None`` for average mode.
    """
    x = check_feature_map(x)
    xp = _replicate_pad_even(x)
    c, h, w = xp.shape
    win = xp.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    if mode == "max":
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return out, idx
    if mode == "average":
        # fixed summation order keeps results bit-reproducible
        out = ((win[..., 0] + win[..., 1]) + (win[..., 2] + win[..., 3])) * x.dtype.type(0.25)
        return out, None
    raise ValueError(f"unknown pool mode {mode!r}")


def pool_backward(input_shape, upstream, argmax=None, mode="max"):
    upstream = check_feature_map(upstream, "upstream")
    c, h, w = input_shape
    hp, wp = h + h % 2, w + w % 2
    if upstream.shape != (c, hp // 2, wp // 2):
        raise ShapeError(f"upstream shape {upstream.shape} does not match pooled shape of {tuple(input_shape)}")
    if mode == "max":
        if argmax is None:
            raise ValueError("max-pool backward needs the forward argmax")
        onehot = np.arange(4) == argmax[..., None]
        win = np.where(onehot, upstream[..., None], np.zeros((), dtype=upstream.dtype))
    elif mode == "average":
        win = np.broadcast_to(upstream[..., None] * upstream.dtype.type(0.25), upstream.shape + (4,))
    else:
        raise ValueError(f"unknown pool mode {mode!r}")
    g = win.reshape(c, hp // 2, wp // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, hp, wp)
    # adjoint of the replicate pad: fold the copied row/column back
    if wp != w:
        g = g.copy()
        g[:, :, w - 1] += g[:, :, w]
        g = g[:, :, :w]
    if hp != h:
        g = g.copy() if wp == w else g
        g[:, h - 1, :] += g[:, h, :]
        g = g[:, :h, :]
    return np.ascontiguousarray(g)


def nearest_indices(src, dst):
    """Source index for every destination index: floor(dst * src / dst_dim)."""
    return (np.arange(dst) * src) // dst


def upsample_nearest(x, height, width):
    x = check_feature_map(x)
    _, h, w = x.shape
    if height < h or width < w:
        raise ShapeError(f"upsample target {(height, width)} is smaller than source {(h, w)}")
    if (height, width) == (h, w):
        return x
    rows = nearest_indices(h, height)
    cols = nearest_indices(w, width)
    return x[:, rows][:, :, cols]


def upsample_backward(upstream, height, width):
    """Adjoint of upsample_nearest: sum each source site's replicas."""
    upstream = check_feature_map(upstream, "upstream")
    _, uh, uw = upstream.shape
    if uh < height or uw < width:
        raise ShapeError(f"upstream {upstream.shape} is smaller than source {(height, width)}")
    if (uh, uw) == (height, width):
        return upstream
    rows = nearest_indices(height, uh)
    cols = nearest_indices(width, uw)
    row_starts = np.searchsorted(rows, np.arange(height))
    col_starts = np.searchsorted(cols, np.arange(width))
    g = np.add.reduceat(upstream, row_starts, axis=1)
    return np.add.reduceat(g, col_starts, axis=2)
