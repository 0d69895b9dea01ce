"""Toy encoder and the full decoder assembly with ablation toggles."""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .exceptions import ConfigurationError, DimensionError
from .hpg import HighFrequencyPrior, modulate
from .layers import ChannelLinear, Conv2d
from .module import Module
from .rng import Initializer
from .sda import SdaBlock, SdaConfig
from .tensor import Tensor


@dataclass
class FeaturePyramid:
    """Encoder outputs at strides 2, 4, 8, 16."""

    f1: Tensor
    f2: Tensor
    f3: Tensor
    f4: Tensor

    def stages(self):
        return (self.f1, self.f2, self.f3, self.f4)


@dataclass
class DecoderConfig:
    c_dec: int = 32
    num_classes: int = 4
    encoder_channels: tuple = (16, 32, 64, 96)
    state_size: int = 8
    directions: int = 2
    ffn_expansion: int = 4
    per_band_vssm: bool = False
    scan_mode: str = "parallel"
    unshuffle_factor: int = 2
    use_hpg: bool = True
    sda_mode: str = "sda"      # sda | off | conv
    wm_mode: str = "wavelet"   # wavelet | vssm-only

    def __post_init__(self):
        if self.c_dec % 2:
            raise ConfigurationError(f"c_dec must be even, got {self.c_dec}")
        if self.unshuffle_factor != 2:
            raise ConfigurationError("unshuffle factor is fixed to 2")
        if self.sda_mode not in ("sda", "off", "conv"):
            raise ConfigurationError(f"unknown sda_mode {self.sda_mode!r}")
        if self.wm_mode not in ("wavelet", "vssm-only"):
            raise ConfigurationError(f"unknown wm_mode {self.wm_mode!r}")
        if len(self.encoder_channels) != 4:
            raise ConfigurationError("encoder needs four stage widths")

    def sda_config(self, channels):
        return SdaConfig(
            channels=channels,
            ffn_expansion=self.ffn_expansion,
            state_size=self.state_size,
            directions=self.directions,
            per_band_vssm=self.per_band_vssm,
            scan_mode=self.scan_mode,
        )


class ToyEncoder(Module):
    """Four stride-2 conv stages standing in for a pretrained backbone."""

    def __init__(self, name, init, channels=(16, 32, 64, 96), in_ch=3):
        super().__init__(name)
        self.stages = []
        prev = in_ch
        for i, width in enumerate(channels, start=1):
            conv = self.add_child(
                Conv2d(f"{name}.stage{i}", init, prev, width, 3, stride=2, padding=1)
            )
            self.stages.append(conv)
            prev = width

    def forward(self, image):
        if image.ndim != 4 or image.shape[1] != 3:
            raise DimensionError(f"encoder expects (b, 3, H, W), got {image.shape}")
        h, w = image.shape[2], image.shape[3]
        if h % 16 or w % 16:
            raise DimensionError(f"image extents must be divisible by 16, got {h}x{w}")
        feats = []
        x = image
        for conv in self.stages:
            x = ops.gelu(conv(x))
            feats.append(x)
        return FeaturePyramid(*feats)

    __call__ = forward


class ConvStandIn(Module):
    """Plain-convolution replacement used by the SDA ablation arm."""

    def __init__(self, name, init, channels):
        super().__init__(name)
        self.conv1 = self.add_child(
            Conv2d(f"{name}.conv1", init, channels, channels, 3, padding=1)
        )
        self.conv2 = self.add_child(
            Conv2d(f"{name}.conv2", init, channels, channels, 3, padding=1)
        )

    def forward(self, x):
        return ops.add(x, self.conv2(ops.gelu(self.conv1(x))))

    __call__ = forward


def _identity(x):
    return x


class WaveSegModel(Module):
    """Encoder, prior guidance, dual SDA sites, aggregation, and seg head."""

    def __init__(self, cfg: DecoderConfig, seed=0):
        super().__init__("")
        self.cfg = cfg
        init = Initializer(seed)
        enc = cfg.encoder_channels
        cd = cfg.c_dec

        self.encoder = self.add_child(ToyEncoder("encoder", init, enc))
        self.proj2 = self.add_child(ChannelLinear("decoder.proj2", init, enc[1], cd))
        self.proj3 = self.add_child(ChannelLinear("decoder.proj3", init, enc[2], cd))
        self.proj4 = self.add_child(ChannelLinear("decoder.proj4", init, enc[3], cd))

        self.sda_l2 = self._make_sda("sda.l2", init, cd)
        self.sda_con = self._make_sda("sda.con", init, cd)

        self.hpg = (
            self.add_child(HighFrequencyPrior("hpg", init, cd)) if cfg.use_hpg else None
        )

        self.agg_conv3 = self.add_child(
            Conv2d("decoder.agg.conv3", init, 3 * cd, cd, 3, padding=1)
        )
        self.agg_conv1 = self.add_child(
            Conv2d("decoder.agg.conv1", init, 4 * cd, cd, 1)
        )
        self.refine_conv = self.add_child(
            Conv2d("decoder.refine.conv3", init, cd, cd, 3, padding=1)
        )
        self.head_conv1 = self.add_child(Conv2d("head.conv1", init, 3 * cd, cd, 1))
        self.head_conv2 = self.add_child(
            Conv2d("head.conv2", init, cd, cfg.num_classes, 1)
        )

    def _make_sda(self, name, init, channels):
        if self.cfg.sda_mode == "off":
            return _identity
        if self.cfg.sda_mode == "conv":
            return self.add_child(ConvStandIn(f"{name}.conv", init, channels))
        return self.add_child(
            SdaBlock(name, init, self.cfg.sda_config(channels), mixer=self.cfg.wm_mode)
        )

    # -- pipeline stages ----------------------------------------------------

    def project_and_align(self, pyramid):
        """Project F2..F4 to the decoder width and align all at stride 8."""
        f2 = self.sda_l2(self.proj2(pyramid.f2))
        f2 = ops.avg_pool2d(f2, 2)
        target_h, target_w = f2.shape[2], f2.shape[3]
        f3 = ops.resize_bilinear(self.proj3(pyramid.f3), target_h, target_w)
        f4 = ops.resize_bilinear(self.proj4(pyramid.f4), target_h, target_w)
        return f2, f3, f4

    def build_prior(self, image):
        if self.hpg is None:
            raise ConfigurationError("prior guidance is toggled off")
        return self.hpg(image)

    def aggregate(self, f2en, f3en, f4en):
        if not (f2en.shape == f3en.shape == f4en.shape):
            raise DimensionError("aggregate expects equal stride-8 shapes")
        z = self.agg_conv3(ops.concat([f2en, f3en, f4en], axis=1))
        z = ops.pixel_unshuffle(z, self.cfg.unshuffle_factor)
        return self.agg_conv1(z)

    def refine(self, f_con, f2en, f3en, f4en):
        up = ops.resize_bilinear(self.sda_con(f_con), f2en.shape[2], f2en.shape[3])
        fa = self.refine_conv(up)
        return ops.add(fa, f2en), ops.add(fa, f3en), ops.add(fa, f4en)

    def seg_head(self, f2a, f3a, f4a, out_hw):
        z = self.head_conv1(ops.concat([f2a, f3a, f4a], axis=1))
        z = self.head_conv2(ops.gelu(z))
        return ops.resize_bilinear(z, out_hw[0], out_hw[1])

    def forward(self, image):
        pyramid = self.encoder(image)
        f2, f3, f4 = self.project_and_align(pyramid)
        if self.hpg is not None:
            prior = self.build_prior(image)
            f2, f3, f4 = (modulate(f, prior) for f in (f2, f3, f4))
        f_con = self.aggregate(f2, f3, f4)
        f2a, f3a, f4a = self.refine(f_con, f2, f3, f4)
        return self.seg_head(f2a, f3a, f4a, (image.shape[2], image.shape[3]))

    __call__ = forward

    # -- persistence ----------------------------------------------------------

    def rep_blocks(self):
        for site in (self.sda_l2, self.sda_con):
            if isinstance(site, SdaBlock):
                yield from site.rep_blocks()

    def merge_rep_blocks(self):
        for rep in self.rep_blocks():
            rep.merge()
            rep.use_merged = True

    def save(self, path, merged=False):
        entries = dict(self.state())
        if merged:
            for rep in self.rep_blocks():
                entries[f"{rep.name}.merged"] = rep.merge().data
        save_checkpoint(path, entries)

    def load(self, path):
        entries = load_checkpoint(path)
        merged = {k: v for k, v in entries.items() if k.endswith(".rep.merged")}
        plain = {k: v for k, v in entries.items() if k not in merged}
        self.load_state(plain)
        for rep in self.rep_blocks():
            key = f"{rep.name}.merged"
            if key in merged:
                rep.merged = Tensor(np.asarray(merged[key], dtype=rep.k3.dtype))
                rep.use_merged = True
        return self
