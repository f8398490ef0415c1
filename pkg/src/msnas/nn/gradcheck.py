"""Central finite-difference verification of analytic gradients (64-bit only)."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def finite_difference_check(build_loss, tensors, *, step: float = 1e-5,
                            max_elements: int = 24, rng=None) -> float:
    """Compare analytic gradients of a scalar loss against central differences.

    ``build_loss`` must recompute the loss from the current contents of
    ``tensors`` on every call. Returns the worst relative error over the
    sampled elements of every tensor.
    """
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        if t.data.dtype != np.float64:
            raise ValueError("finite differences need float64 tensors")
        t.zero_grad()
    loss = build_loss()
    if loss.data.dtype != np.float64:
        raise ValueError("finite differences need a float64 loss")
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= max_elements else rng.choice(n, size=max_elements, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + step
            up = float(build_loss().data)
            flat[i] = keep - step
            down = float(build_loss().data)
            flat[i] = keep
            numeric = (up - down) / (2 * step)
            a = float(grad.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst
