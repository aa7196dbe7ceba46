"""Dense NHWC array kernels and their backward passes.

Tensors are plain :class:`numpy.ndarray` objects in row-major (C) order.
Every kernel keeps the dtype of its input, so the same code runs in float64
for gradient checks and float32 for training.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPSILON = 1e-3
BN_MOMENTUM = 0.99


class ShapeError(ValueError):
    """Raised when tensor dimensions do not compose."""


def _check_ndim(x: np.ndarray, ndim: int, name: str) -> None:
    if x.ndim != ndim:
        raise ShapeError(f"{name}: expected a {ndim}-d tensor, got shape {x.shape}")


def same_padding(k: int) -> Tuple[int, int]:
    """Zero padding (before, after) that keeps a stride-1 output the same size."""
    total = k - 1
    return total // 2, total - total // 2


def _pad_input(x: np.ndarray, kh: int, kw: int, padding: str) -> np.ndarray:
    if padding == "valid":
        return x
    if padding == "same":
        return np.pad(x, ((0, 0), same_padding(kh), same_padding(kw), (0, 0)))
    raise ValueError(f"unknown padding {padding!r}")


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, padding: str = "valid") -> np.ndarray:
    """Stride-1 2-D cross-correlation.

    ``x`` is (N, H, W, Cin), ``kernel`` is (kh, kw, Cin, Cout), ``bias`` is (Cout,).
    """
    _check_ndim(x, 4, "conv2d input")
    _check_ndim(kernel, 4, "conv2d kernel")
    kh, kw, cin, cout = kernel.shape
    if x.shape[3] != cin:
        raise ShapeError(f"conv2d: input has {x.shape[3]} channels, kernel expects {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {cout} filters")
    xp = _pad_input(x, kh, kw, padding)
    if kh > xp.shape[1] or kw > xp.shape[2]:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {xp.shape[1]}x{xp.shape[2]}")
    cols = _im2col(xp, kh, kw)
    n, ho, wo = cols.shape[:3]
    out = cols.reshape(n * ho * wo, -1) @ kernel.reshape(-1, cout)
    out += bias
    return out.reshape(n, ho, wo, cout)


def _im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # (N, Ho, Wo, C, kh, kw) -> (N, Ho, Wo, kh, kw, C) to match kernel layout
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def conv2d_backward(
    grad: np.ndarray, x: np.ndarray, kernel: np.ndarray, padding: str = "valid"
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`conv2d` w.r.t. input, kernel and bias."""
    kh, kw, cin, cout = kernel.shape
    xp = _pad_input(x, kh, kw, padding)
    n, ho, wo, _ = grad.shape
    g2 = grad.reshape(-1, cout)
    cols = _im2col(xp, kh, kw).reshape(n * ho * wo, -1)
    dkernel = (cols.T @ g2).reshape(kernel.shape)
    dbias = g2.sum(axis=0)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + ho, j:j + wo, :] += (g2 @ kernel[i, j].T).reshape(n, ho, wo, cin)
    if padding == "same":
        top, _ = same_padding(kh)
        left, _ = same_padding(kw)
        dxp = dxp[:, top:top + x.shape[1], left:left + x.shape[2], :]
    return dxp, dkernel, dbias


def _pool_quadrants(x: np.ndarray, ho: int, wo: int):
    v = x[:, :ho * 2, :wo * 2, :]
    return v[:, 0::2, 0::2], v[:, 0::2, 1::2], v[:, 1::2, 0::2], v[:, 1::2, 1::2]


def maxpool2d(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2.

    Odd trailing rows/columns are dropped (floor division).  Returns the pooled
    tensor and, per output element, the winning position 0..3 inside its
    window in row-major order; ties go to the first position.
    """
    _check_ndim(x, 4, "maxpool2d input")
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    if ho == 0 or wo == 0:
        raise ShapeError(f"maxpool2d: input {h}x{w} too small for a 2x2 pool")
    a, b, cc, d = _pool_quadrants(x, ho, wo)
    top = np.maximum(a, b)
    bottom = np.maximum(cc, d)
    out = np.maximum(top, bottom)
    # first maximum in row-major order: a, b, c, d
    arg = np.where(
        top >= bottom,
        np.where(a >= b, 0, 1),
        np.where(cc >= d, 2, 3),
    ).astype(np.int8)
    return out, arg


def maxpool2d_backward(grad: np.ndarray, argmax: np.ndarray, input_shape: Tuple[int, ...]) -> np.ndarray:
    n, h, w, c = input_shape
    ho, wo = grad.shape[1:3]
    dx = np.zeros(input_shape, dtype=grad.dtype)
    zero = grad.dtype.type(0)
    for pos, q in enumerate(_pool_quadrants(dx, ho, wo)):
        q[...] = np.where(argmax == pos, grad, zero)
    return dx


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    _check_ndim(x, 2, "dense input")
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(f"dense: input width {x.shape[1]} does not match weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"dense: bias shape {bias.shape} does not match {weights.shape[1]} units")
    return x @ weights + bias


def dense_backward(grad: np.ndarray, x: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return grad @ weights.T, x.T @ grad, grad.sum(axis=0)


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    _check_ndim(x, 2, "softmax input")
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(grad: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return probs * (grad - (grad * probs).sum(axis=1, keepdims=True))


def _bn_axes(x: np.ndarray) -> Tuple[int, ...]:
    return tuple(range(x.ndim - 1))


def batchnorm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str = "train",
    momentum: float = BN_MOMENTUM,
    epsilon: float = BN_EPSILON,
):
    """Per-channel batch normalization over every axis but the last.

    Returns ``(out, cache, new_running_mean, new_running_var)``.  In infer mode
    the running statistics come back unchanged and ``cache`` holds what the
    backward pass needs either way.
    """
    if x.shape[0] == 0:
        raise ShapeError("batchnorm: empty batch")
    if gamma.shape != (x.shape[-1],):
        raise ShapeError(f"batchnorm: gamma shape {gamma.shape} does not match {x.shape[-1]} channels")
    axes = _bn_axes(x)
    if mode == "train":
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        new_mean = momentum * running_mean + (1.0 - momentum) * mean
        new_var = momentum * running_var + (1.0 - momentum) * var
    elif mode == "infer":
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    else:
        raise ValueError(f"unknown mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x - mean) * inv_std
    out = xhat * gamma + beta
    cache = (xhat, inv_std, gamma, mode)
    return out.astype(x.dtype, copy=False), cache, new_mean, new_var


def batchnorm_backward(grad: np.ndarray, cache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std, gamma, mode = cache
    axes = _bn_axes(grad)
    dgamma = (grad * xhat).sum(axis=axes)
    dbeta = grad.sum(axis=axes)
    dxhat = grad * gamma
    if mode == "infer":
        return dxhat * inv_std, dgamma, dbeta
    m = grad.size // grad.shape[-1]
    dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


def dropout(
    x: np.ndarray, rate: float, mode: str = "train", rng: Optional[np.random.Generator] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Inverted dropout.  Returns ``(out, mask)`` where mask already holds the 1/(1-rate) scale."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    _check_ndim(x, 4, "global_avg_pool input")
    return x.mean(axis=(1, 2))


def global_avg_pool_backward(grad: np.ndarray, input_shape: Tuple[int, ...]) -> np.ndarray:
    n, h, w, c = input_shape
    return np.broadcast_to(grad[:, None, None, :] / (h * w), input_shape).copy()


def flatten(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1)


def unflatten(x: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`flatten`; ``shape`` is the per-sample shape."""
    return x.reshape((x.shape[0],) + tuple(shape))
