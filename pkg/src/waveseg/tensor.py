"""Dense tensors with reverse-mode differentiation over an explicit tape.

Tensors wrap a numpy buffer in batch-channel-height-width layout (for 4-D
data) and are treated as immutable once produced by an operation.  Gradients
are accumulated by replaying a :class:`Tape` in exact reverse recording
order.  The tape stack is thread-local, so concurrent use is safe as long as
each thread owns its own tape.
"""

import threading

import numpy as np

from .exceptions import DimensionError, NumericalError

_local = threading.local()

_FLOAT_DTYPES = (np.float32, np.float64)


def _stack():
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = []
        _local.tapes = stack
    return stack


def active_tape():
    """Innermost tape of the calling thread, or None under no_grad / no tape."""
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of backward rules for one differentiation pass."""

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        assert popped is self, "tape stack corrupted"
        return False

    def record(self, backward):
        self._nodes.append(backward)

    def backward(self, loss):
        """Seed the scalar `loss` with gradient one and replay in reverse."""
        if loss.data.size != 1:
            raise DimensionError(
                f"backward requires a scalar loss, got shape {loss.shape}"
            )
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            node()

    def clear(self):
        """Drop every recorded rule along with its saved state."""
        self._nodes.clear()

    def __len__(self):
        return len(self._nodes)


class no_grad:
    """Context manager suspending recording on any enclosing tape."""

    def __enter__(self):
        _stack().append(None)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack().pop()
        return False


_settings = {"dtype": np.float64, "finite_checks": True}


def set_default_dtype(dtype):
    dtype = np.dtype(dtype).type
    if dtype not in _FLOAT_DTYPES:
        raise ValueError("default dtype must be float32 or float64")
    _settings["dtype"] = dtype


def default_dtype():
    return _settings["dtype"]


def set_finite_checks(enabled):
    """Toggle per-operation NaN/Inf screening (on by default)."""
    _settings["finite_checks"] = bool(enabled)


def ensure_finite(data, where):
    if _settings["finite_checks"] and not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite values produced by {where}")


class Tensor:
    """N-dimensional array of reals, optionally tracked for differentiation."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        if dtype is None and isinstance(data, np.ndarray) and data.dtype.type in _FLOAT_DTYPES:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=dtype or default_dtype())
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        # Copy on first contribution: backward rules may hand over views of
        # other gradient buffers, and later += must not leak into them.
        if self.grad is None:
            self.grad = np.array(g)
        else:
            self.grad += g

    def detach(self):
        return Tensor(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Arithmetic operators are bound in ops.py to avoid an import cycle.


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)
