"""High-frequency prior guidance.

A learned prior is built from the raw image: resize to stride 8, one Haar
level, direction-matched smoothing of the three detail bands (1x3 on LH,
3x1 on HL, 3x3 on HH), channel concat, a pointwise MLP up to the decoder
width, and a resize back to stride 8 so the prior aligns with the features
it gates.  The gate itself is a channel-axis softmax: each feature is
multiplied by a per-pixel distribution over channels and added back to
itself, so the per-entry amplification always lies in (1, 2).
"""

from . import ops
from .exceptions import DimensionError
from .layers import Conv2d
from .module import Module
from .wavelet import dwt2d


class HighFrequencyPrior(Module):
    def __init__(self, name, init, out_channels, image_channels=3):
        super().__init__(name)
        self.out_channels = out_channels
        c = image_channels
        self.conv_lh = self.add_child(
            Conv2d(f"{name}.sel_lh", init, c, c, (1, 3), padding=(0, 1))
        )
        self.conv_hl = self.add_child(
            Conv2d(f"{name}.sel_hl", init, c, c, (3, 1), padding=(1, 0))
        )
        self.conv_hh = self.add_child(
            Conv2d(f"{name}.sel_hh", init, c, c, 3, padding=1)
        )
        hidden = 2 * 3 * c
        self.mlp1 = self.add_child(Conv2d(f"{name}.mlp1", init, 3 * c, hidden, 1))
        self.mlp2 = self.add_child(Conv2d(f"{name}.mlp2", init, hidden, out_channels, 1))

    def forward(self, image):
        b, c, h, w = image.shape
        if h % 16 or w % 16:
            raise DimensionError(f"image extents must be divisible by 16, got {h}x{w}")
        x = ops.resize_bilinear(image, h // 8, w // 8)
        bands = dwt2d(x)
        selected = ops.concat(
            [self.conv_lh(bands.lh), self.conv_hl(bands.hl), self.conv_hh(bands.hh)],
            axis=1,
        )
        prior = self.mlp2(ops.gelu(self.mlp1(selected)))
        return ops.resize_bilinear(prior, h // 8, w // 8)

    __call__ = forward


def modulate(features, prior):
    """Gate features with the prior: f * softmax_channels(prior) + f."""
    if features.shape != prior.shape:
        raise DimensionError(
            f"feature shape {features.shape} does not match prior {prior.shape}"
        )
    gate = ops.softmax_axis(prior, axis=1)
    return ops.add(ops.mul(features, gate), features)
