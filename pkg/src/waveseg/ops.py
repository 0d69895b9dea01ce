"""Differentiable operations over :class:`~waveseg.tensor.Tensor`.

Every operation computes its forward value with numpy, screens the result
for non-finite entries, and (when a tape is active and some input is
tracked) records a closure that scatters the output gradient back to its
inputs.  Layout is fixed to batch-channel-height-width for 4-D data.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from .exceptions import ConfigurationError, DataError, DimensionError
from .tensor import Tensor, active_tape, as_tensor, ensure_finite

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _make(data, where):
    ensure_finite(data, where)
    return Tensor(data)


def _track(out, inputs, backward):
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(backward)
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _acc_slice(tensor, index, grad):
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad[index] += grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(x, y):
    x, y = as_tensor(x), as_tensor(y)
    out = _make(x.data + y.data, "add")

    def backward():
        g = out.grad
        if g is None:
            return
        if x.requires_grad:
            x.accumulate_grad(_unbroadcast(g, x.shape))
        if y.requires_grad:
            y.accumulate_grad(_unbroadcast(g, y.shape))

    return _track(out, (x, y), backward)


def sub(x, y):
    x, y = as_tensor(x), as_tensor(y)
    out = _make(x.data - y.data, "sub")

    def backward():
        g = out.grad
        if g is None:
            return
        if x.requires_grad:
            x.accumulate_grad(_unbroadcast(g, x.shape))
        if y.requires_grad:
            y.accumulate_grad(_unbroadcast(-g, y.shape))

    return _track(out, (x, y), backward)


def mul(x, y):
    x, y = as_tensor(x), as_tensor(y)
    out = _make(x.data * y.data, "mul")

    def backward():
        g = out.grad
        if g is None:
            return
        if x.requires_grad:
            x.accumulate_grad(_unbroadcast(g * y.data, x.shape))
        if y.requires_grad:
            y.accumulate_grad(_unbroadcast(g * x.data, y.shape))

    return _track(out, (x, y), backward)


def neg(x):
    x = as_tensor(x)
    out = _make(-x.data, "neg")

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate_grad(-out.grad)

    return _track(out, (x,), backward)


def exp(x):
    x = as_tensor(x)
    data = np.exp(x.data)
    out = _make(data, "exp")

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate_grad(out.grad * data)

    return _track(out, (x,), backward)


def softplus(x):
    x = as_tensor(x)
    out = _make(np.logaddexp(0.0, x.data), "softplus")

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate_grad(out.grad * special.expit(x.data))

    return _track(out, (x,), backward)


def silu(x):
    x = as_tensor(x)
    sig = special.expit(x.data)
    out = _make(x.data * sig, "silu")

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate_grad(out.grad * sig * (1.0 + x.data * (1.0 - sig)))

    return _track(out, (x,), backward)


def gelu(x):
    """Exact Gaussian error linear unit, x * Phi(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + special.erf(x.data * _INV_SQRT2))
    out = _make(x.data * cdf, "gelu")

    def backward():
        if out.grad is not None and x.requires_grad:
            pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
            x.accumulate_grad(out.grad * (cdf + x.data * pdf))

    return _track(out, (x,), backward)


def _phi_arrays(z):
    # (e^z - 1)/z, with a short series below 1e-6 to dodge cancellation.
    z = np.asarray(z, dtype=np.result_type(z, np.float32))
    out = np.expm1(z)
    small = np.abs(z) < 1e-6
    if small.any():
        out = np.divide(out, z, out=out, where=~small)
        zs = z[small]
        out[small] = 1.0 + zs / 2.0 + (zs * zs) / 6.0
    else:
        out /= z
    return out


def _phi_grad_arrays(z):
    z = np.asarray(z, dtype=np.result_type(z, np.float32))
    out = np.exp(z)
    out *= z - 1.0
    out += 1.0
    small = np.abs(z) < 1e-4
    if small.any():
        out = np.divide(out, z * z, out=out, where=~small)
        zs = z[small]
        out[small] = 0.5 + zs / 3.0 + (zs * zs) / 8.0 + (zs * zs * zs) / 30.0
    else:
        out /= z * z
    return out


def zoh_phi(z):
    """First-order hold factor (e^z - 1)/z used by the ZOH input map."""
    z = as_tensor(z)
    out = _make(_phi_arrays(z.data), "zoh_phi")

    def backward():
        if out.grad is not None and z.requires_grad:
            z.accumulate_grad(out.grad * _phi_grad_arrays(z.data))

    return _track(out, (z,), backward)


# ---------------------------------------------------------------------------
# reductions and reshaping
# ---------------------------------------------------------------------------

def sumall(x):
    x = as_tensor(x)
    out = _make(np.asarray(x.data.sum()), "sumall")

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate_grad(np.broadcast_to(out.grad, x.shape).copy())

    return _track(out, (x,), backward)


def meanall(x):
    x = as_tensor(x)
    out = _make(np.asarray(x.data.mean()), "meanall")

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate_grad(np.broadcast_to(out.grad / x.size, x.shape).copy())

    return _track(out, (x,), backward)


def sum_axis(x, axis, keepdims=False):
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ConfigurationError(f"axis {axis} invalid for shape {x.shape}")
    axis = axis % x.ndim
    out = _make(x.data.sum(axis=axis, keepdims=keepdims), "sum_axis")

    def backward():
        g = out.grad
        if g is None or not x.requires_grad:
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        x.accumulate_grad(np.broadcast_to(g, x.shape).copy())

    return _track(out, (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    out = _make(x.data.reshape(shape), "reshape")

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate_grad(out.grad.reshape(x.shape))

    return _track(out, (x,), backward)


def transpose(x, axes):
    x = as_tensor(x)
    out = _make(x.data.transpose(axes), "transpose")
    inverse = tuple(np.argsort(axes))

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate_grad(out.grad.transpose(inverse))

    return _track(out, (x,), backward)


def flip(x, axis):
    x = as_tensor(x)
    out = _make(np.flip(x.data, axis=axis), "flip")

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate_grad(np.flip(out.grad, axis=axis))

    return _track(out, (x,), backward)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    base = tensors[0]
    for t in tensors[1:]:
        if t.ndim != base.ndim:
            raise DimensionError("concat inputs must share rank")
        for d in range(base.ndim):
            if d != axis % base.ndim and t.shape[d] != base.shape[d]:
                raise DimensionError(
                    f"concat extent mismatch on axis {d}: {t.shape} vs {base.shape}"
                )
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), "concat")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward():
        g = out.grad
        if g is None:
            return
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(index)])

    return _track(out, tuple(tensors), backward)


def split(x, sections, axis):
    """Split into equal sections (int) or given sizes (list) along `axis`."""
    x = as_tensor(x)
    n = x.shape[axis]
    if isinstance(sections, int):
        if n % sections:
            raise DimensionError(f"cannot split extent {n} into {sections} equal parts")
        sizes = [n // sections] * sections
    else:
        sizes = list(sections)
        if sum(sizes) != n:
            raise DimensionError(f"split sizes {sizes} do not cover extent {n}")
    offsets = np.cumsum([0] + sizes)
    tape = active_tape()
    outs = []
    for lo, hi in zip(offsets[:-1], offsets[1:]):
        index = [slice(None)] * x.ndim
        index[axis] = slice(lo, hi)
        index = tuple(index)
        piece = _make(x.data[index].copy(), "split")
        if tape is not None and x.requires_grad:
            piece.requires_grad = True

            def backward(piece=piece, index=index):
                if piece.grad is not None:
                    _acc_slice(x, index, piece.grad)

            tape.record(backward)
        outs.append(piece)
    return outs


# ---------------------------------------------------------------------------
# linear maps
# ---------------------------------------------------------------------------

def linear(x, weight, bias=None):
    """Affine map over the last axis: y[..., o] = sum_i x[..., i] w[o, i] + b[o]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2:
        raise DimensionError(f"linear weight must be 2-D, got {weight.shape}")
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(
            f"linear extent mismatch: input {x.shape[-1]} vs weight {weight.shape[1]}"
        )
    data = x.data @ weight.data.T
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear bias shape {bias.shape} != ({weight.shape[0]},)")
        data = data + bias.data
    out = _make(data, "linear")
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward():
        g = out.grad
        if g is None:
            return
        if x.requires_grad:
            x.accumulate_grad(g @ weight.data)
        if weight.requires_grad:
            gm = g.reshape(-1, weight.shape[0])
            xm = x.data.reshape(-1, weight.shape[1])
            weight.accumulate_grad(gm.T @ xm)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.reshape(-1, weight.shape[0]).sum(axis=0))

    return _track(out, inputs, backward)


def channel_linear(x, weight, bias=None):
    """`linear` applied to the channel axis of a BCHW tensor."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"channel_linear expects BCHW input, got {x.shape}")
    t = transpose(x, (0, 2, 3, 1))
    y = linear(t, weight, bias)
    return transpose(y, (0, 3, 1, 2))


def conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """2-D cross-correlation with optional grouping.

    Output spatial extent follows floor((n + 2p - k) / stride) + 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(
            f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}"
        )
    batch, in_ch, h, w = x.shape
    out_ch, wc, kh, kw = weight.shape
    if groups < 1 or in_ch % groups or out_ch % groups:
        raise ConfigurationError(
            f"groups {groups} must divide in/out channels ({in_ch}, {out_ch})"
        )
    if wc != in_ch // groups:
        raise DimensionError(
            f"weight expects {wc} channels per group, input provides {in_ch // groups}"
        )
    if isinstance(padding, int):
        ph = pw = padding
    else:
        ph, pw = padding
    if stride < 1 or ph < 0 or pw < 0:
        raise ConfigurationError("stride must be >= 1 and padding >= 0")
    hp, wp = h + 2 * ph, w + 2 * pw
    out_h = (hp - kh) // stride + 1
    out_w = (wp - kw) // stride + 1
    if hp < kh or wp < kw:
        raise DimensionError(f"kernel {kh}x{kw} exceeds padded input {hp}x{wp}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (b, c, oh, ow, kh, kw) -> (b, groups, c/g * kh * kw, oh * ow)
    cg = in_ch // groups
    og = out_ch // groups
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(batch, groups, cg * kh * kw, out_h * out_w)
    wg = weight.data.reshape(groups, og, cg * kh * kw)
    data = np.matmul(wg[None], cols).reshape(batch, out_ch, out_h, out_w)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (out_ch,):
            raise DimensionError(f"conv2d bias shape {bias.shape} != ({out_ch},)")
        data = data + bias.data[:, None, None]
    out = _make(data, "conv2d")
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward():
        g = out.grad
        if g is None:
            return
        gg = g.reshape(batch, groups, og, out_h * out_w)
        if weight.requires_grad:
            dw = np.matmul(gg, cols.transpose(0, 1, 3, 2)).sum(axis=0)
            weight.accumulate_grad(dw.reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = np.matmul(wg.transpose(0, 2, 1)[None], gg)
            dwin = dcols.reshape(batch, in_ch, kh, kw, out_h, out_w)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * out_h : stride,
                        j : j + stride * out_w : stride] += dwin[:, :, i, j]
            x.accumulate_grad(dxp[:, :, ph : ph + h, pw : pw + w])

    return _track(out, inputs, backward)


def avg_pool2d(x, factor):
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"avg_pool2d expects BCHW input, got {x.shape}")
    b, c, h, w = x.shape
    if h % factor or w % factor:
        raise DimensionError(f"extents {h}x{w} not divisible by pool factor {factor}")
    oh, ow = h // factor, w // factor
    data = x.data.reshape(b, c, oh, factor, ow, factor).mean(axis=(3, 5))
    out = _make(data, "avg_pool2d")

    def backward():
        g = out.grad
        if g is None or not x.requires_grad:
            return
        gx = np.repeat(np.repeat(g, factor, axis=2), factor, axis=3) / (factor * factor)
        x.accumulate_grad(gx)

    return _track(out, (x,), backward)


# ---------------------------------------------------------------------------
# normalization and attention-style maps
# ---------------------------------------------------------------------------

def layer_norm(x, gain, shift, eps=1e-5):
    """Normalize the channel axis of a BCHW tensor at each spatial position."""
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    if x.ndim != 4:
        raise DimensionError(f"layer_norm expects BCHW input, got {x.shape}")
    c = x.shape[1]
    if gain.shape != (c,) or shift.shape != (c,):
        raise DimensionError(
            f"gain/shift must have shape ({c},), got {gain.shape} and {shift.shape}"
        )
    if eps <= 0:
        raise ConfigurationError("layer_norm eps must be positive")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gcol = gain.data[None, :, None, None]
    out = _make(gcol * xhat + shift.data[None, :, None, None], "layer_norm")

    def backward():
        g = out.grad
        if g is None:
            return
        if x.requires_grad:
            gg = g * gcol
            m1 = gg.mean(axis=1, keepdims=True)
            m2 = (gg * xhat).mean(axis=1, keepdims=True)
            x.accumulate_grad(inv * (gg - m1 - xhat * m2))
        if gain.requires_grad:
            gain.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)))
        if shift.requires_grad:
            shift.accumulate_grad(g.sum(axis=(0, 2, 3)))

    return _track(out, (x, gain, shift), backward)


def softmax_axis(x, axis):
    """Max-subtracted softmax along `axis`."""
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ConfigurationError(f"axis {axis} invalid for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)
    out = _make(p, "softmax_axis")

    def backward():
        g = out.grad
        if g is None or not x.requires_grad:
            return
        dot = (g * p).sum(axis=axis, keepdims=True)
        x.accumulate_grad(p * (g - dot))

    return _track(out, (x,), backward)


def _resize_coeffs(n_in, n_out, dtype):
    # Sample centers at (i + 0.5) * scale - 0.5, clamped to the valid range.
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1.0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = (pos - lo).astype(dtype)
    return lo, hi, frac


def resize_bilinear(x, out_h, out_w):
    """Corner-unaligned bilinear resize; identity when sizes already match."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"resize_bilinear expects BCHW input, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise DimensionError("output extents must be >= 1")
    b, c, h, w = x.shape
    if (out_h, out_w) == (h, w):
        out = _make(x.data.copy(), "resize_bilinear")

        def backward_id():
            if out.grad is not None and x.requires_grad:
                x.accumulate_grad(out.grad)

        return _track(out, (x,), backward_id)

    ylo, yhi, fy = _resize_coeffs(h, out_h, x.dtype.type)
    xlo, xhi, fx = _resize_coeffs(w, out_w, x.dtype.type)
    r0 = x.data[:, :, ylo, :]
    r1 = x.data[:, :, yhi, :]
    top = r0[:, :, :, xlo] * (1.0 - fx) + r0[:, :, :, xhi] * fx
    bot = r1[:, :, :, xlo] * (1.0 - fx) + r1[:, :, :, xhi] * fx
    wy = fy[None, None, :, None]
    out = _make(top * (1.0 - wy) + bot * wy, "resize_bilinear")

    def backward():
        g = out.grad
        if g is None or not x.requires_grad:
            return
        gt = g * (1.0 - wy)
        gb = g * wy
        full = (slice(None), slice(None), slice(None))
        dx = np.zeros_like(x.data)
        for grow, rows in ((gt, ylo), (gb, yhi)):
            drow = np.zeros((b, c, out_h, w), dtype=x.dtype)
            np.add.at(drow, full + (xlo,), grow * (1.0 - fx))
            np.add.at(drow, full + (xhi,), grow * fx)
            np.add.at(dx, (slice(None), slice(None), rows), drow)
        x.accumulate_grad(dx)

    return _track(out, (x,), backward)


def pixel_unshuffle(x, factor):
    """Space-to-depth: (b, c, h, w) -> (b, c*f*f, h/f, w/f), raster order per block."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"pixel_unshuffle expects BCHW input, got {x.shape}")
    if factor < 1:
        raise ConfigurationError("factor must be >= 1")
    b, c, h, w = x.shape
    if h % factor or w % factor:
        raise DimensionError(f"extents {h}x{w} not divisible by factor {factor}")
    oh, ow = h // factor, w // factor
    data = (
        x.data.reshape(b, c, oh, factor, ow, factor)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, c * factor * factor, oh, ow)
    )
    out = _make(data, "pixel_unshuffle")

    def backward():
        g = out.grad
        if g is None or not x.requires_grad:
            return
        gx = (
            g.reshape(b, c, factor, factor, oh, ow)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(b, c, h, w)
        )
        x.accumulate_grad(gx)

    return _track(out, (x,), backward)


def pixel_shuffle(x, factor):
    """Depth-to-space inverse of :func:`pixel_unshuffle`."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"pixel_shuffle expects BCHW input, got {x.shape}")
    b, c, h, w = x.shape
    if c % (factor * factor):
        raise DimensionError(f"channels {c} not divisible by factor^2 {factor * factor}")
    oc = c // (factor * factor)
    data = (
        x.data.reshape(b, oc, factor, factor, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(b, oc, h * factor, w * factor)
    )
    out = _make(data, "pixel_shuffle")

    def backward():
        g = out.grad
        if g is None or not x.requires_grad:
            return
        gx = (
            g.reshape(b, oc, h, factor, w, factor)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(b, c, h, w)
        )
        x.accumulate_grad(gx)

    return _track(out, (x,), backward)


def cross_entropy_logits(logits, labels):
    """Mean cross-entropy with integer labels over the class axis (axis 1).

    Log-sum-exp stabilized; labels are plain integer arrays, not tensors.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim < 2:
        raise DimensionError(f"logits need a class axis, got shape {logits.shape}")
    expected = logits.shape[:1] + logits.shape[2:]
    if labels.shape != expected:
        raise DimensionError(f"labels shape {labels.shape} != {expected}")
    k = logits.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise DataError(f"label ids must lie in [0, {k}), got range "
                        f"[{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, np.expand_dims(labels, 1), axis=1)
    count = picked.size
    out = _make(np.asarray(-picked.sum() / count), "cross_entropy_logits")

    def backward():
        g = out.grad
        if g is None or not logits.requires_grad:
            return
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, np.expand_dims(labels, 1), 1.0, axis=1)
        logits.accumulate_grad(g * (p - onehot) / count)

    return _track(out, (logits,), backward)


# ---------------------------------------------------------------------------
# operator sugar on Tensor
# ---------------------------------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__neg__ = lambda self: neg(self)
