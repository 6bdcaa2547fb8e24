"""Stateful layers: parameters, running statistics and cached activations.

A layer's ``forward`` caches what its ``backward`` needs; ``backward``
accumulates into parameter gradients and returns the input gradient.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops


class Tensor:
    """float32 buffer with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, requires_grad: bool = True):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.grad = np.zeros_like(self.data) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def accumulate(self, g: np.ndarray) -> None:
        self.grad += g.astype(np.float32, copy=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Module:
    """Container with named parameters (learnable) and buffers (state)."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def add_param(self, name: str, data) -> Tensor:
        t = Tensor(data)
        self._params[name] = t
        return t

    def add_buffer(self, name: str, data) -> Tensor:
        t = Tensor(data, requires_grad=False)
        self._buffers[name] = t
        return t

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, t in self._params.items():
            yield prefix + name, t
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, t in self._buffers.items():
            yield prefix + name, t
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def zero_grad(self) -> None:
        for _, t in self.named_parameters():
            t.zero_grad()


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1, padding: int = 0):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.weight = self.add_param("weight", np.zeros((out_channels, in_channels, kernel, kernel)))
        self._x = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._x = x
        return ops.conv2d_forward(x, self.weight.data, self.stride, self.padding)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        gx, gw = ops.conv2d_backward(grad_out, self._x, self.weight.data, self.stride, self.padding)
        self.weight.accumulate(gw)
        self._x = None
        return gx


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9):
        super().__init__()
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.gamma = self.add_param("gamma", np.ones(channels))
        self.beta = self.add_param("beta", np.zeros(channels))
        self.running_mean = self.add_buffer("running_mean", np.zeros(channels))
        self.running_var = self.add_buffer("running_var", np.ones(channels))
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        out, self._cache = ops.batchnorm2d_forward(
            x, self.gamma.data, self.beta.data, self.running_mean.data, self.running_var.data,
            training, self.eps, self.momentum,
        )
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        gx, gg, gb = ops.batchnorm2d_backward(grad_out, self._cache)
        self.gamma.accumulate(gg)
        self.beta.accumulate(gb)
        self._cache = None
        return gx


class ReLU(Module):
    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._x = x
        return ops.relu_forward(x)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = ops.relu_backward(grad_out, self._x)
        self._x = None
        return g


class AvgPool2d(Module):
    def __init__(self, window: int, stride: int | None = None):
        super().__init__()
        self.window = window
        self.stride = stride or window

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._shape = x.shape
        return ops.avgpool2d_forward(x, self.window, self.stride)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return ops.avgpool2d_backward(grad_out, self._shape, self.window, self.stride)


class GlobalAvgPool(Module):
    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._shape = x.shape
        return ops.global_avgpool_forward(x)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return ops.global_avgpool_backward(grad_out, self._shape)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.weight = self.add_param("weight", np.zeros((in_features, out_features)))
        self.bias = self.add_param("bias", np.zeros(out_features))
        self._x = None

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._x = x
        return ops.linear_forward(x, self.weight.data, self.bias.data)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        gx, gw, gb = ops.linear_backward(grad_out, self._x, self.weight.data)
        self.weight.accumulate(gw)
        self.bias.accumulate(gb)
        self._x = None
        return gx


class Sequential(Module):
    def __init__(self, **layers: Module):
        super().__init__()
        self.layers = [self.add_child(name, layer) for name, layer in layers.items()]

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out
