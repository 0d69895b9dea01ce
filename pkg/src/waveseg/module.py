"""Lightweight parameter-owning module base."""

from collections import OrderedDict

import numpy as np

from .exceptions import DataError
from .tensor import Tensor, default_dtype


class Module:
    """Holds named parameters and child modules; names are absolute paths."""

    def __init__(self, name):
        self.name = name
        self._params = OrderedDict()
        self._children = []

    def register(self, leaf, tensor):
        full = f"{self.name}.{leaf}" if self.name else leaf
        self._params[full] = tensor
        return tensor

    def add_child(self, module):
        self._children.append(module)
        return module

    def named_parameters(self):
        out = OrderedDict(self._params)
        for child in self._children:
            out.update(child.named_parameters())
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def param_count(self):
        return sum(p.size for p in self.parameters())

    def state(self):
        """Parameter arrays keyed by name (live references)."""
        return {k: v.data for k, v in self.named_parameters().items()}

    def load_state(self, entries, strict=True):
        params = self.named_parameters()
        missing = [k for k in params if k not in entries]
        if strict and missing:
            raise DataError(f"checkpoint missing entries: {missing[:5]}...")
        for key, tensor in params.items():
            if key not in entries:
                continue
            arr = np.asarray(entries[key], dtype=default_dtype())
            if arr.shape != tensor.shape:
                raise DataError(
                    f"entry {key} has shape {arr.shape}, expected {tensor.shape}"
                )
            tensor.data = arr
            tensor.grad = None
