"""Central-difference verification of tape gradients."""

import numpy as np

from .exceptions import NumericalError
from .rng import generator
from .tensor import Tape, no_grad


def grad_check(fn, wrt, h=1e-4, max_entries=None, seed=0):
    """Max relative error between analytic and central-difference gradients.

    `fn` must rebuild a scalar (sum-reduced) output from the current data of
    the tensors in `wrt` on every call.  Error per entry is
    |analytic - numeric| / max(1, |analytic|); the max over all checked
    entries is returned.  `max_entries`, when set, checks a deterministic
    random subset of entries per tensor instead of every entry.
    """
    for t in wrt:
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
        if not np.all(np.isfinite(loss.data)):
            raise NumericalError("grad_check loss is non-finite")
        tape.backward(loss)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in wrt
    ]
    for t in wrt:
        t.zero_grad()

    worst = 0.0
    rng = generator(seed, "grad_check")
    with no_grad():
        for tensor, grad in zip(wrt, analytic):
            flat = tensor.data.reshape(-1)
            gflat = grad.reshape(-1)
            if max_entries is not None and flat.size > max_entries:
                idxs = rng.choice(flat.size, size=max_entries, replace=False)
            else:
                idxs = range(flat.size)
            for i in idxs:
                orig = flat[i]
                flat[i] = orig + h
                fp = float(fn().data)
                flat[i] = orig - h
                fm = float(fn().data)
                flat[i] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise NumericalError("grad_check probe produced non-finite loss")
                numeric = (fp - fm) / (2.0 * h)
                err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
                if err > worst:
                    worst = err
    return worst
