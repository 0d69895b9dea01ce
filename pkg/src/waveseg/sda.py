"""Spectrum decomposition attention: wavelet mixing plus local perception.

The block runs two pre-normalized residual stages:

    y_m = WaveletMixer(LN(y)) + y
    out = FFN(LN(LPB(y_m))) + LPB(y_m)

The mixer sends the low-frequency sub-band through a reparameterizable
convolution block and the three detail sub-bands, channel-concatenated,
through one shared selective-scan module before inverse reconstruction.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .exceptions import ConfigurationError
from .layers import Conv2d, LayerNormChannels
from .module import Module
from .ssm import Vssm2d
from .tensor import Tensor
from .wavelet import WaveletSubbands, dwt2d, idwt2d


@dataclass
class SdaConfig:
    channels: int
    ffn_expansion: int = 4
    state_size: int = 8
    directions: int = 2
    per_band_vssm: bool = False
    scan_mode: str = "parallel"

    def __post_init__(self):
        if self.channels % 2:
            raise ConfigurationError(f"channels must be even, got {self.channels}")
        if self.ffn_expansion < 1:
            raise ConfigurationError("ffn_expansion must be >= 1")


class RepBlock(Module):
    """3x3 + 1x1 + scaled-identity branches, mergeable into one 3x3 kernel.

    Training mode sums the branches; after `merge` the single fused kernel
    reproduces the branch sum exactly (up to roundoff).  No biases: all
    branches are zero-preserving.
    """

    def __init__(self, name, init, channels):
        super().__init__(name)
        self.channels = channels
        self.k3 = self.register(
            "k3", init.uniform(f"{name}.k3", (channels, channels, 3, 3), channels * 9)
        )
        self.k1 = self.register(
            "k1", init.uniform(f"{name}.k1", (channels, channels, 1, 1), channels)
        )
        self.identity_scale = self.register(
            "scale", init.full(f"{name}.scale", (channels,), 1.0)
        )
        self.merged = None
        self.use_merged = False

    def merge(self):
        """Fuse branches into a single 3x3 kernel; idempotent."""
        c = self.channels
        kernel = self.k3.data.copy()
        kernel[:, :, 1, 1] += self.k1.data[:, :, 0, 0]
        kernel[np.arange(c), np.arange(c), 1, 1] += self.identity_scale.data
        self.merged = Tensor(kernel)
        return self.merged

    def forward(self, x):
        if self.use_merged:
            if self.merged is None:
                self.merge()
            return ops.conv2d(x, self.merged, padding=1)
        out = ops.conv2d(x, self.k3, padding=1)
        out = ops.add(out, ops.conv2d(x, self.k1))
        scale = ops.reshape(self.identity_scale, (1, self.channels, 1, 1))
        return ops.add(out, ops.mul(x, scale))

    __call__ = forward


class LocalPerception(Module):
    """Depthwise 3x3 -> GELU -> pointwise 1x1, added residually."""

    def __init__(self, name, init, channels):
        super().__init__(name)
        self.dw = self.add_child(
            Conv2d(f"{name}.dw", init, channels, channels, 3, padding=1, groups=channels)
        )
        self.pw = self.add_child(Conv2d(f"{name}.pw", init, channels, channels, 1))

    def forward(self, x):
        return ops.add(x, self.pw(ops.gelu(self.dw(x))))

    __call__ = forward


class FeedForward(Module):
    def __init__(self, name, init, channels, expansion):
        super().__init__(name)
        hidden = channels * expansion
        self.fc1 = self.add_child(Conv2d(f"{name}.fc1", init, channels, hidden, 1))
        self.fc2 = self.add_child(Conv2d(f"{name}.fc2", init, hidden, channels, 1))

    def forward(self, x):
        return self.fc2(ops.gelu(self.fc1(x)))

    __call__ = forward


class WaveletMixer(Module):
    """Frequency-split token mixer over one Haar level."""

    def __init__(self, name, init, cfg):
        super().__init__(name)
        self.cfg = cfg
        c = cfg.channels
        self.rep = self.add_child(RepBlock(f"{name}.rep", init, c))
        if cfg.per_band_vssm:
            self.vssm = None
            self.band_vssms = [
                self.add_child(
                    Vssm2d(f"{name}.vssm_{band}", init, c, cfg.state_size,
                           cfg.directions, cfg.scan_mode)
                )
                for band in ("lh", "hl", "hh")
            ]
        else:
            self.vssm = self.add_child(
                Vssm2d(f"{name}.vssm", init, 3 * c, cfg.state_size,
                       cfg.directions, cfg.scan_mode)
            )
            self.band_vssms = None

    def forward(self, x):
        bands = dwt2d(x)
        low = self.rep(bands.ll)
        if self.vssm is not None:
            high = ops.concat([bands.lh, bands.hl, bands.hh], axis=1)
            lh, hl, hh = ops.split(self.vssm(high), 3, axis=1)
        else:
            lh, hl, hh = (
                m(b) for m, b in zip(self.band_vssms, (bands.lh, bands.hl, bands.hh))
            )
        return idwt2d(WaveletSubbands(low, lh, hl, hh))

    __call__ = forward


class SdaBlock(Module):
    def __init__(self, name, init, cfg, mixer="wavelet"):
        super().__init__(name)
        if mixer not in ("wavelet", "vssm-only"):
            raise ConfigurationError(f"unknown mixer {mixer!r}")
        c = cfg.channels
        self.norm1 = self.add_child(LayerNormChannels(f"{name}.norm1", init, c))
        if mixer == "wavelet":
            self.mixer = self.add_child(WaveletMixer(f"{name}.wm", init, cfg))
        else:
            self.mixer = self.add_child(
                Vssm2d(f"{name}.vssm", init, c, cfg.state_size, cfg.directions,
                       cfg.scan_mode)
            )
        self.lpb = self.add_child(LocalPerception(f"{name}.lpb", init, c))
        self.norm2 = self.add_child(LayerNormChannels(f"{name}.norm2", init, c))
        self.ffn = self.add_child(
            FeedForward(f"{name}.ffn", init, c, cfg.ffn_expansion)
        )

    def forward(self, x):
        y_m = ops.add(self.mixer(self.norm1(x)), x)
        local = self.lpb(y_m)
        return ops.add(self.ffn(self.norm2(local)), local)

    __call__ = forward

    def rep_blocks(self):
        if isinstance(self.mixer, WaveletMixer):
            yield self.mixer.rep
