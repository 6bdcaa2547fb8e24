"""Central finite-difference checks for every differentiable kernel.

Each check projects the op output onto a fixed random tensor R, giving the
scalar loss sum(f(inputs) * R), and compares the analytic input/parameter
gradients with central differences in float64.

Error metric: max |analytic - numeric| / max(max |analytic|, max |numeric|),
i.e. the largest deviation relative to the gradient's own scale.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import ops

H = 1e-4
TOLERANCE = 1e-4
TRIALS = 10


def numeric_grad(loss: Callable[[], float], arr: np.ndarray, h: float = H) -> np.ndarray:
    """Central differences of ``loss()`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss()
        flat[i] = orig - h
        down = loss()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def _projected(fn, out_shape, rng):
    r = rng.standard_normal(out_shape)
    return (lambda: float(np.sum(fn() * r))), r


def _check_conv(rng, n, c, o, hw, k, stride, padding):
    x = rng.standard_normal((n, c, hw, hw))
    w = rng.standard_normal((o, c, k, k))
    out_shape = ops.conv2d_forward(x, w, stride, padding).shape
    loss, r = _projected(lambda: ops.conv2d_forward(x, w, stride, padding), out_shape, rng)
    gx, gw = ops.conv2d_backward(r, x, w, stride, padding)
    return max(relative_error(gx, numeric_grad(loss, x)), relative_error(gw, numeric_grad(loss, w)))


def check_conv2d_1x1(rng):
    return _check_conv(rng, n=2, c=3, o=4, hw=4, k=1, stride=1, padding=0)


def check_conv2d_3x3(rng):
    return _check_conv(rng, n=1, c=2, o=3, hw=4, k=3, stride=1, padding=1)


def check_conv2d_3x3_stride2(rng):
    return _check_conv(rng, n=2, c=2, o=2, hw=5, k=3, stride=2, padding=1)


def check_batchnorm2d(rng):
    n, c, hw = 2, 3, 3
    x = rng.standard_normal((n, c, hw, hw)) * 2 + 0.5
    gamma = rng.standard_normal(c)
    beta = rng.standard_normal(c)

    def fwd():
        rm, rv = np.zeros(c), np.ones(c)
        return ops.batchnorm2d_forward(x, gamma, beta, rm, rv, training=True)[0]

    loss, r = _projected(fwd, x.shape, rng)
    _, cache = ops.batchnorm2d_forward(x, gamma, beta, np.zeros(c), np.ones(c), training=True)
    gx, gg, gb = ops.batchnorm2d_backward(r, cache)
    return max(
        relative_error(gx, numeric_grad(loss, x)),
        relative_error(gg, numeric_grad(loss, gamma)),
        relative_error(gb, numeric_grad(loss, beta)),
    )


def check_relu(rng):
    x = rng.standard_normal((2, 3, 3, 3))
    # keep every entry well away from the kink
    x = np.where(np.abs(x) < 0.05, x + np.sign(x + 1e-12) * 0.1, x)
    loss, r = _projected(lambda: ops.relu_forward(x), x.shape, rng)
    return relative_error(ops.relu_backward(r, x), numeric_grad(loss, x))


def check_avgpool2d(rng):
    x = rng.standard_normal((2, 2, 4, 4))
    out_shape = ops.avgpool2d_forward(x, 2, 2).shape
    loss, r = _projected(lambda: ops.avgpool2d_forward(x, 2, 2), out_shape, rng)
    return relative_error(ops.avgpool2d_backward(r, x.shape, 2, 2), numeric_grad(loss, x))


def check_global_avgpool(rng):
    x = rng.standard_normal((2, 3, 3, 4))
    loss, r = _projected(lambda: ops.global_avgpool_forward(x), (2, 3), rng)
    return relative_error(ops.global_avgpool_backward(r, x.shape), numeric_grad(loss, x))


def check_concat(rng):
    a = rng.standard_normal((2, 2, 3, 3))
    b = rng.standard_normal((2, 3, 3, 3))
    loss, r = _projected(lambda: ops.concat_channels([a, b]), (2, 5, 3, 3), rng)
    ga, gb = ops.split_channels(r, [2, 3])
    return max(relative_error(ga, numeric_grad(loss, a)), relative_error(gb, numeric_grad(loss, b)))


def check_fully_connected(rng):
    x = rng.standard_normal((2, 3))
    w = rng.standard_normal((3, 4))
    b = rng.standard_normal(4)
    loss, r = _projected(lambda: ops.linear_forward(x, w, b), (2, 4), rng)
    gx, gw, gb = ops.linear_backward(r, x, w)
    return max(
        relative_error(gx, numeric_grad(loss, x)),
        relative_error(gw, numeric_grad(loss, w)),
        relative_error(gb, numeric_grad(loss, b)),
    )


def check_softmax_cross_entropy(rng):
    logits = rng.standard_normal((3, 2)) * 2
    labels = rng.integers(0, 2, size=3)
    _, grad = ops.softmax_cross_entropy(logits, labels)
    num = numeric_grad(lambda: ops.softmax_cross_entropy(logits, labels)[0], logits)
    return relative_error(grad, num)


CHECKS: dict[str, Callable[[np.random.Generator], float]] = {
    "conv2d_1x1": check_conv2d_1x1,
    "conv2d_3x3": check_conv2d_3x3,
    "conv2d_3x3_stride2": check_conv2d_3x3_stride2,
    "batchnorm2d_train": check_batchnorm2d,
    "relu": check_relu,
    "avgpool2d": check_avgpool2d,
    "global_avgpool": check_global_avgpool,
    "concat_channels": check_concat,
    "fully_connected": check_fully_connected,
    "softmax_cross_entropy": check_softmax_cross_entropy,
}


def run_gradcheck(seed: int = 0, trials: int = TRIALS) -> dict[str, float]:
    """Return the worst relative error per op over ``trials`` random instances."""
    rng = np.random.default_rng(seed)
    return {name: max(check(rng) for _ in range(trials)) for name, check in CHECKS.items()}
