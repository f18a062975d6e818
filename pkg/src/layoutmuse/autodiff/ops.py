"""Convolutional and structural ops built on the tensor primitives.

Convolutions are expressed as im2col/col2im (an exact linear transpose
pair) plus matmul, so first- and second-order gradients fall out of the
primitive rules.

Shape conventions (documented here once):
  conv2d:            out = floor((H + 2*pad - k) / stride) + 1
  conv_transpose2d:  out = (H - 1) * stride - 2*pad + k
Weights: conv2d (Cout, Cin, kh, kw); conv_transpose2d (Cin, Cout, kh, kw).
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from . import tensor as T
from .tensor import Tensor


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    view = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]  # (n, c, ho, wo, k, k)
    cols = view.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, ho * wo)
    return np.ascontiguousarray(cols)


def _col2im(cols: np.ndarray, xshape, k: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = xshape
    hp, wp = h + 2 * pad, w + 2 * pad
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    cols = cols.reshape(n, c, k, k, ho, wo)
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += cols[:, :, i, j]
    return out[:, :, pad : pad + h, pad : pad + w]


def conv_out_size(h: int, k: int, stride: int, pad: int) -> int:
    return (h + 2 * pad - k) // stride + 1


def conv_transpose_out_size(h: int, k: int, stride: int, pad: int) -> int:
    return (h - 1) * stride - 2 * pad + k


def im2col(x: Tensor, k: int, stride: int, pad: int) -> Tensor:
    xshape = x.shape
    return T.linear_map(
        x,
        lambda a: _im2col(a, k, stride, pad),
        lambda g: _col2im(g, xshape, k, stride, pad),
    )


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv2d x{x.shape} w{w.shape}")
    n, _, h, wd = x.shape
    cout, cin, k, _ = w.shape
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(wd, k, stride, pad)
    cols = im2col(x, k, stride, pad)  # (n, cin*k*k, ho*wo)
    flat = T.reshape(T.permute(cols, (1, 0, 2)), (cin * k * k, n * ho * wo))
    out = T.matmul(T.reshape(w, (cout, cin * k * k)), flat)  # (cout, n*ho*wo)
    out = T.permute(T.reshape(out, (cout, n, ho, wo)), (1, 0, 2, 3))
    if b is not None:
        out = T.add(out, T.reshape(b, (1, cout, 1, 1)))
    return out


def conv_transpose2d(
    x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 2, pad: int = 1
) -> Tensor:
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"conv_transpose2d x{x.shape} w{w.shape}")
    n, cin, h, wd = x.shape
    _, cout, k, _ = w.shape
    ho = conv_transpose_out_size(h, k, stride, pad)
    wo = conv_transpose_out_size(wd, k, stride, pad)
    flat = T.reshape(T.permute(x, (1, 0, 2, 3)), (cin, n * h * wd))
    cols = T.matmul(T.transpose(T.reshape(w, (cin, cout * k * k))), flat)
    cols = T.reshape(T.permute(T.reshape(cols, (cout * k * k, n, h * wd)), (1, 0, 2)), (n, cout * k * k, h * wd))
    out_shape = (n, cout, ho, wo)
    y = T.linear_map(
        cols,
        lambda a: _col2im(a, out_shape, k, stride, pad),
        lambda g: _im2col(g, k, stride, pad),
    )
    if b is not None:
        y = T.add(y, T.reshape(b, (1, cout, 1, 1)))
    return y


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x (n, din) @ w (din, dout) + b."""
    y = T.matmul(x, w)
    if b is not None:
        y = T.add(y, T.reshape(b, (1, w.shape[1])))
    return y


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over batch (and spatial) axes.

    In training mode batch statistics are used and the running buffers are
    updated in place; in eval mode the running statistics act as constants.
    """
    axes = (0,) if x.data.ndim == 2 else (0, 2, 3)
    cshape = (1, -1) if x.data.ndim == 2 else (1, -1, 1, 1)
    if training:
        mu = T.tmean(x, axis=axes, keepdims=True)
        var = T.tmean(T.mul(T.add(x, T.neg(mu)), T.add(x, T.neg(mu))), axis=axes, keepdims=True)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu.data.reshape(-1)
        running_var *= momentum
        running_var += (1 - momentum) * var.data.reshape(-1)
    else:
        mu = Tensor(running_mean.reshape(cshape).astype(x.data.dtype))
        var = Tensor(running_var.reshape(cshape).astype(x.data.dtype))
    xhat = T.div(T.add(x, T.neg(mu)), T.tsqrt(T.add(var, eps)))
    return T.add(T.mul(xhat, T.reshape(gamma, cshape)), T.reshape(beta, cshape))


_BINOMIAL = np.outer([1, 4, 6, 4, 1], [1, 4, 6, 4, 1]).astype(np.float64) / 256.0


def binomial_downsample(x: Tensor) -> Tensor:
    """Fixed [1,4,6,4,1] binomial blur + stride-2 decimation, per channel."""
    c = x.shape[1]
    k = np.zeros((c, c, 5, 5), dtype=x.data.dtype)
    for i in range(c):
        k[i, i] = _BINOMIAL
    return conv2d(x, Tensor(k), stride=2, pad=2)


def gather_flat(x: Tensor, indices: np.ndarray) -> Tensor:
    """Pick flat-index entries of x as a 1-D tensor (linear, transposable)."""
    idx = np.asarray(indices, dtype=np.int64)
    xshape = x.shape

    def fwd(a):
        return a.reshape(-1)[idx]

    def bwd(g):
        out = np.zeros(int(np.prod(xshape)), dtype=g.dtype)
        np.add.at(out, idx, g)
        return out.reshape(xshape)

    return T.linear_map(x, fwd, bwd)
