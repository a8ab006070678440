"""Parameterized layers on top of the tensor ops.

Layers own their Tensors (and BN running buffers) and know how to
enumerate them with stable names, which is what the checkpoint format,
the optimizer's weight-decay grouping, and the footprint walker consume.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T


class Conv2d:
    """Bias-free square convolution with He-normal fan-out init."""

    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0, rng=None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        std = np.sqrt(2.0 / (out_channels * kernel * kernel))
        rng = rng or np.random.default_rng(0)
        w = rng.normal(0.0, std, size=(out_channels, in_channels, kernel, kernel))
        self.weight = T.Tensor(w.astype(np.float32), requires_grad=True)

    def __call__(self, x):
        return T.conv2d(x, self.weight, stride=self.stride, pad=self.pad)

    def named_parameters(self, prefix):
        # conv weights take L2 decay
        yield f"{prefix}.w", self.weight, True

    def named_buffers(self, prefix):
        return ()

    def out_shape(self, h, w):
        return (self.out_channels,
                T._conv_out_size(h, self.kernel, self.stride, self.pad),
                T._conv_out_size(w, self.kernel, self.stride, self.pad))


class BatchNorm2d:
    kind = "bn"

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = T.Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = T.Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.stats = T.BNStats(channels)

    def __call__(self, x, train=False):
        return T.batchnorm2d(x, self.gamma, self.beta, self.stats, train,
                             momentum=self.momentum, eps=self.eps)

    def named_parameters(self, prefix):
        yield f"{prefix}.gamma", self.gamma, False
        yield f"{prefix}.beta", self.beta, False

    def named_buffers(self, prefix):
        yield f"{prefix}.mean", self.stats, "mean"
        yield f"{prefix}.var", self.stats, "var"


class Linear:
    """Fully-connected layer; weight (out, in) plus bias."""

    kind = "linear"

    def __init__(self, in_features, out_features, rng=None, weight_std=None):
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or np.random.default_rng(0)
        std = np.sqrt(2.0 / out_features) if weight_std is None else weight_std
        w = rng.normal(0.0, std, size=(out_features, in_features))
        self.weight = T.Tensor(w.astype(np.float32), requires_grad=True)
        self.bias = T.Tensor(np.zeros(out_features, dtype=np.float32), requires_grad=True)

    def __call__(self, x):
        return T.linear(x, self.weight, self.bias)

    def named_parameters(self, prefix):
        yield f"{prefix}.w", self.weight, True
        yield f"{prefix}.b", self.bias, False

    def named_buffers(self, prefix):
        return ()
