"""Reusable parameterized layers built from the op library."""

from . import ops
from .module import Module


class Conv2d(Module):
    def __init__(self, name, init, in_ch, out_ch, kernel, stride=1, padding=0,
                 groups=1, bias=True):
        super().__init__(name)
        if isinstance(kernel, int):
            kernel = (kernel, kernel)
        kh, kw = kernel
        fan_in = (in_ch // groups) * kh * kw
        self.stride = stride
        self.padding = padding
        self.groups = groups
        self.weight = self.register(
            "w", init.uniform(f"{name}.w", (out_ch, in_ch // groups, kh, kw), fan_in)
        )
        self.bias = self.register("b", init.zeros(f"{name}.b", (out_ch,))) if bias else None

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride,
                          padding=self.padding, groups=self.groups)

    __call__ = forward


class Linear(Module):
    def __init__(self, name, init, in_features, out_features, bias=True):
        super().__init__(name)
        self.weight = self.register(
            "w", init.uniform(f"{name}.w", (out_features, in_features), in_features)
        )
        self.bias = self.register("b", init.zeros(f"{name}.b", (out_features,))) if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)

    __call__ = forward


class ChannelLinear(Linear):
    """Linear map over the channel axis of BCHW features."""

    def forward(self, x):
        return ops.channel_linear(x, self.weight, self.bias)

    __call__ = forward


class LayerNormChannels(Module):
    def __init__(self, name, init, channels, eps=1e-5):
        super().__init__(name)
        self.eps = eps
        self.gain = self.register("gain", init.full(f"{name}.gain", (channels,), 1.0))
        self.shift = self.register("shift", init.zeros(f"{name}.shift", (channels,)))

    def forward(self, x):
        return ops.layer_norm(x, self.gain, self.shift, eps=self.eps)

    __call__ = forward
