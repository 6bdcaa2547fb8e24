"""Functional forward/backward kernels on NCHW numpy arrays.

Every op preserves the floating dtype of its inputs, so the same code runs
the float32 training path and the float64 gradient-check path. Batched
matmuls are issued per sample, which keeps a sample's result independent
of the batch it is processed in.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateBatch, LabelOutOfRange, ShapeMismatch


def _out_extent(size: int, k: int, stride: int, padding: int, what: str) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise ShapeMismatch(f"{what}: extent {size} with kernel {k}, stride {stride}, padding {padding} is not integral")
    return span // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> tuple[np.ndarray, int, int]:
    n, c, h, w = x.shape
    ho = _out_extent(h, kh, stride, padding, "conv2d height")
    wo = _out_extent(w, kw, stride, padding, "conv2d width")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, C, Ho, Wo, kh, kw) -> (N, C*kh*kw, Ho*Wo)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    return cols, ho, wo


def _check_conv(x: np.ndarray, weight: np.ndarray) -> None:
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch(f"conv2d expects 4-d input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"conv2d: input has {x.shape[1]} channels, weight expects {weight.shape[1]}")


def conv2d_forward(x: np.ndarray, weight: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation with zero padding and no bias. x: (N,C,H,W), weight: (O,C,kh,kw)."""
    _check_conv(x, weight)
    n = x.shape[0]
    o, c, kh, kw = weight.shape
    wmat = weight.reshape(o, c * kh * kw)
    if kh == kw == 1 and padding == 0:
        xs = x[:, :, ::stride, ::stride] if stride > 1 else x
        ho, wo = xs.shape[2], xs.shape[3]
        if stride > 1:
            _out_extent(x.shape[2], 1, stride, 0, "conv2d height")
            _out_extent(x.shape[3], 1, stride, 0, "conv2d width")
        out = np.matmul(wmat, xs.reshape(n, c, ho * wo))
    else:
        cols, ho, wo = _im2col(x, kh, kw, stride, padding)
        out = np.matmul(wmat, cols)
    return out.reshape(n, o, ho, wo)


def conv2d_backward(
    grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray, stride: int = 1, padding: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Return (grad_input, grad_weight) for :func:`conv2d_forward`."""
    _check_conv(x, weight)
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    wmat = weight.reshape(o, c * kh * kw)
    if kh == kw == 1 and padding == 0:
        xs = x[:, :, ::stride, ::stride] if stride > 1 else x
        ho, wo = xs.shape[2], xs.shape[3]
        cols = xs.reshape(n, c, ho * wo)
    else:
        cols, ho, wo = _im2col(x, kh, kw, stride, padding)
    if grad_out.shape != (n, o, ho, wo):
        raise ShapeMismatch(f"conv2d backward: grad_out {grad_out.shape} != {(n, o, ho, wo)}")
    g = grad_out.reshape(n, o, ho * wo)
    grad_w = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
    gcols = np.matmul(wmat.T, g)

    if kh == kw == 1 and padding == 0:
        if stride == 1:
            return gcols.reshape(x.shape), grad_w
        grad_x = np.zeros_like(x)
        grad_x[:, :, ::stride, ::stride] = gcols.reshape(n, c, ho, wo)
        return grad_x, grad_w

    gcols = gcols.reshape(n, c, kh, kw, ho, wo)
    hp, wp = h + 2 * padding, w + 2 * padding
    grad_xp = np.zeros((n, c, hp, wp), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            grad_xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, i, j]
    grad_x = grad_xp[:, :, padding:padding + h, padding:padding + w] if padding else grad_xp
    return np.ascontiguousarray(grad_x), grad_w


def batchnorm2d_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    eps: float = 1e-5,
    momentum: float = 0.9,
) -> tuple[np.ndarray, tuple]:
    """Per-channel batch norm. Train mode updates ``running_*`` in place.

    running <- momentum * running + (1 - momentum) * batch statistic
    (population variance).
    """
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch(f"batchnorm: {c} channels but gamma {gamma.shape}, beta {beta.shape}")
    if training:
        if n * h * w < 2:
            raise DegenerateBatch(f"batchnorm in train mode needs N*H*W >= 2, got {n * h * w}")
        mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
        var = x.var(axis=(0, 2, 3), dtype=np.float64)
        running_mean *= momentum
        running_mean += ((1.0 - momentum) * mean).astype(running_mean.dtype)
        running_var *= momentum
        running_var += ((1.0 - momentum) * var).astype(running_var.dtype)
    else:
        mean = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x - mean.astype(x.dtype)[None, :, None, None]) * inv_std[None, :, None, None]
    out = xhat * gamma[None, :, None, None] + beta[None, :, None, None]
    return out, (xhat, inv_std, gamma, training)


def batchnorm2d_backward(grad_out: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (grad_input, grad_gamma, grad_beta)."""
    xhat, inv_std, gamma, training = cache
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    scale = (gamma * inv_std)[None, :, None, None]
    if not training:
        return grad_out * scale, grad_gamma, grad_beta
    n, _, h, w = grad_out.shape
    m = n * h * w
    grad_x = scale / m * (m * grad_out - grad_beta[None, :, None, None] - xhat * grad_gamma[None, :, None, None])
    return grad_x, grad_gamma, grad_beta


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def avgpool2d_forward(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeMismatch(f"avgpool2d expects (N,C,H,W), got {x.shape}")
    _out_extent(x.shape[2], window, stride, 0, "avgpool height")
    _out_extent(x.shape[3], window, stride, 0, "avgpool width")
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    return win.mean(axis=(4, 5)).astype(x.dtype, copy=False)


def avgpool2d_backward(grad_out: np.ndarray, input_shape: tuple, window: int, stride: int) -> np.ndarray:
    n, c, h, w = input_shape
    ho = _out_extent(h, window, stride, 0, "avgpool height")
    wo = _out_extent(w, window, stride, 0, "avgpool width")
    if grad_out.shape != (n, c, ho, wo):
        raise ShapeMismatch(f"avgpool backward: grad_out {grad_out.shape} != {(n, c, ho, wo)}")
    grad_x = np.zeros(input_shape, dtype=grad_out.dtype)
    g = grad_out / (window * window)
    for i in range(window):
        for j in range(window):
            grad_x[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += g
    return grad_x


def global_avgpool_forward(x: np.ndarray) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeMismatch(f"global_avgpool expects (N,C,H,W), got {x.shape}")
    return x.mean(axis=(2, 3)).astype(x.dtype, copy=False)


def global_avgpool_backward(grad_out: np.ndarray, input_shape: tuple) -> np.ndarray:
    n, c, h, w = input_shape
    return np.broadcast_to((grad_out / (h * w))[:, :, None, None], input_shape).copy()


def concat_channels(inputs) -> np.ndarray:
    inputs = list(inputs)
    if not inputs:
        raise ShapeMismatch("concat_channels needs at least one input")
    ref = inputs[0].shape
    for t in inputs:
        if t.ndim != 4 or t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ShapeMismatch(f"concat_channels: incompatible shapes {[t.shape for t in inputs]}")
    if len(inputs) == 1:
        return inputs[0]
    return np.concatenate(inputs, axis=1)


def split_channels(grad_out: np.ndarray, channels) -> list[np.ndarray]:
    """Backward of :func:`concat_channels`: slice ``grad_out`` by channel counts."""
    channels = list(channels)
    if sum(channels) != grad_out.shape[1]:
        raise ShapeMismatch(f"split_channels: {channels} does not sum to {grad_out.shape[1]}")
    bounds = np.cumsum([0] + channels)
    return [grad_out[:, a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map x @ weight + bias. x: (N,D), weight: (D,M), bias: (M,)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeMismatch(f"fully_connected: x {x.shape}, weight {weight.shape}, bias {bias.shape}")
    return np.matmul(x[:, None, :], weight)[:, 0, :] + bias


def linear_backward(grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (grad_input, grad_weight, grad_bias)."""
    return grad_out @ weight.T, x.T @ grad_out, grad_out.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of the true class.

    Returns (loss, grad_logits) where grad_logits = (softmax - onehot) / N.
    """
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatch(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - z[rows, labels], dtype=np.float64))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1
    return loss, grad / n
