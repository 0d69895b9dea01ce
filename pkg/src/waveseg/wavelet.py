"""Single-level orthonormal 2-D Haar analysis and synthesis.

One analysis level splits a BCHW tensor into a low-frequency approximation
(LL) and three directional detail bands at half resolution.  With the
orthonormal +-1/2 filters used here the transform is an orthogonal map:
synthesis is the exact inverse of analysis and energy is preserved.

Per 2x2 block (a b / c d):

    LL = (a + b + c + d) / 2
    LH = (a + b - c - d) / 2    row-direction (vertical-position) detail
    HL = (a - b + c - d) / 2    column-direction (horizontal-position) detail
    HH = (a - b - c + d) / 2

Note the LH/HL orientation convention is a choice: LH here responds to
horizontal stripes (detail along rows).  The transposed convention is
equally self-consistent; downstream code pairs LH with 1x3 kernels and HL
with 3x1 kernels to match this one.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError
from .tensor import Tensor, active_tape, as_tensor, ensure_finite


@dataclass
class WaveletSubbands:
    """The (LL, LH, HL, HH) quadruple, each (b, c, h/2, w/2)."""

    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def bands(self):
        return (self.ll, self.lh, self.hl, self.hh)

    @property
    def shape(self):
        return self.ll.shape


def _analysis(x):
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    c = x[:, :, 1::2, 0::2]
    d = x[:, :, 1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    lh = (a + b - c - d) * 0.5
    hl = (a - b + c - d) * 0.5
    hh = (a - b - c + d) * 0.5
    return ll, lh, hl, hh


def _synthesis(ll, lh, hl, hh):
    b_, c_, h2, w2 = ll.shape
    out = np.empty((b_, c_, 2 * h2, 2 * w2), dtype=ll.dtype)
    out[:, :, 0::2, 0::2] = (ll + lh + hl + hh) * 0.5
    out[:, :, 0::2, 1::2] = (ll + lh - hl - hh) * 0.5
    out[:, :, 1::2, 0::2] = (ll - lh + hl - hh) * 0.5
    out[:, :, 1::2, 1::2] = (ll - lh - hl + hh) * 0.5
    return out


def dwt2d(x):
    """Decompose a BCHW tensor into four half-resolution sub-bands.

    Height and width must be even; no implicit padding is applied.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"dwt2d expects BCHW input, got {x.shape}")
    h, w = x.shape[2], x.shape[3]
    if h % 2 or w % 2:
        raise DimensionError(f"dwt2d requires even extents, got {h}x{w}")
    parts = _analysis(x.data)
    outs = [Tensor(p) for p in parts]
    for p in outs:
        ensure_finite(p.data, "dwt2d")
    tape = active_tape()
    if tape is not None and x.requires_grad:
        for o in outs:
            o.requires_grad = True

        def backward():
            grads = [
                o.grad if o.grad is not None else np.zeros_like(o.data) for o in outs
            ]
            if all(o.grad is None for o in outs):
                return
            # Orthonormal transform: the adjoint equals the inverse.
            x.accumulate_grad(_synthesis(*grads))

        tape.record(backward)
    return WaveletSubbands(*outs)


def idwt2d(bands):
    """Reconstruct the original tensor from its four sub-bands."""
    ll, lh, hl, hh = (as_tensor(t) for t in bands.bands())
    shape = ll.shape
    for t in (lh, hl, hh):
        if t.shape != shape:
            raise DimensionError(
                f"sub-band shapes differ: {t.shape} vs {shape}"
            )
    if ll.ndim != 4:
        raise DimensionError(f"idwt2d expects BCHW sub-bands, got {shape}")
    out = Tensor(_synthesis(ll.data, lh.data, hl.data, hh.data))
    ensure_finite(out.data, "idwt2d")
    tape = active_tape()
    inputs = (ll, lh, hl, hh)
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True

        def backward():
            g = out.grad
            if g is None:
                return
            parts = _analysis(g)
            for t, p in zip(inputs, parts):
                if t.requires_grad:
                    t.accumulate_grad(p)

        tape.record(backward)
    return out
