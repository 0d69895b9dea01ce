"""Seeded randomness and parameter initialization.

Every stream is derived from a base seed plus a name, so adding or removing
one component of a model never shifts the draws of another.  Two models
built from the same seed therefore agree bitwise on every parameter they
share.
"""

import zlib

import numpy as np

from .tensor import Tensor, default_dtype


def generator(seed, name=""):
    """Independent generator for (seed, name)."""
    entropy = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


class Initializer:
    """Creates named, trainable parameters from per-name substreams."""

    def __init__(self, seed):
        self.seed = int(seed)

    def uniform(self, name, shape, fan_in):
        """Weights uniform in +-sqrt(1/fan_in)."""
        bound = float(np.sqrt(1.0 / fan_in))
        data = generator(self.seed, name).uniform(-bound, bound, size=shape)
        return Tensor(data.astype(default_dtype()), requires_grad=True)

    def zeros(self, name, shape):
        return Tensor(np.zeros(shape, dtype=default_dtype()), requires_grad=True)

    def full(self, name, shape, value):
        return Tensor(np.full(shape, value, dtype=default_dtype()), requires_grad=True)

    def array(self, name, values):
        return Tensor(np.asarray(values, dtype=default_dtype()), requires_grad=True)

    def log_uniform(self, name, shape, low, high):
        """Draws uniform in log-space over [low, high]."""
        g = generator(self.seed, name)
        data = np.exp(g.uniform(np.log(low), np.log(high), size=shape))
        return Tensor(data.astype(default_dtype()), requires_grad=True)
