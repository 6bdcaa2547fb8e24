"""Dense NCHW numeric core with hand-written reverse-mode gradients."""
from .layers import AvgPool2d, BatchNorm2d, Conv2d, GlobalAvgPool, Linear, Module, ReLU, Sequential, Tensor
from .ops import (
    avgpool2d_backward,
    avgpool2d_forward,
    batchnorm2d_backward,
    batchnorm2d_forward,
    concat_channels,
    conv2d_backward,
    conv2d_forward,
    global_avgpool_backward,
    global_avgpool_forward,
    linear_backward,
    linear_forward,
    relu_backward,
    relu_forward,
    softmax,
    softmax_cross_entropy,
    split_channels,
)

__all__ = [
    "AvgPool2d", "BatchNorm2d", "Conv2d", "GlobalAvgPool", "Linear", "Module", "ReLU", "Sequential", "Tensor",
    "avgpool2d_backward", "avgpool2d_forward", "batchnorm2d_backward", "batchnorm2d_forward",
    "concat_channels", "conv2d_backward", "conv2d_forward", "global_avgpool_backward",
    "global_avgpool_forward", "linear_backward", "linear_forward", "relu_backward", "relu_forward",
    "softmax", "softmax_cross_entropy", "split_channels",
]
