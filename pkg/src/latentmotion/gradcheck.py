"""Central-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import NonFiniteError, Tensor


def _value(f) -> float:
    out = f()
    val = float(out.data.reshape(-1)[0]) if isinstance(out, Tensor) else float(out)
    if not np.isfinite(val):
        raise NonFiniteError("grad_check: objective returned a non-finite value")
    return val


def numeric_grad(f: Callable[[], Tensor], param: Tensor, eps: float) -> np.ndarray:
    grad = np.zeros(param.shape, dtype=np.float64)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = _value(f)
        flat[i] = orig - eps
        lo = _value(f)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    Per coordinate: ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    ``f`` takes no arguments and must read the current values of ``params``.
    """
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    for p in params:
        p.grad = None
    out = f()
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError("grad_check: objective returned a non-finite value")
    out.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64)
        numeric = numeric_grad(f, p, eps)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    for p in params:
        p.grad = None
    return worst
