"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError, Tensor


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list[Tensor], grads: list[np.ndarray | None], state: AdamState) -> None:
    """Apply one Adam update in place; ``None`` grads count as zero."""
    if state.lr <= 0:
        raise ValueError("adam: lr must be positive")
    if len(grads) != len(params):
        raise ValueError("adam: params/grads length mismatch")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ValueError("adam: state does not match parameter list")
    for p, g in zip(params, grads):
        if g is not None and g.shape != p.shape:
            raise ValueError(f"adam: grad shape {g.shape} != param shape {p.shape}")
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteError("adam: non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.dtype, copy=False)


class Adam:
    def __init__(self, params, lr=1e-4, betas=(0.5, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def state_tensors(self, prefix: str) -> dict[str, np.ndarray]:
        """Moment buffers and step counter as named arrays for checkpointing."""
        out = {f"{prefix}.step": np.array([self.state.step], dtype=np.float64)}
        if self.state.m:
            for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
                out[f"{prefix}.m.{i}"] = m
                out[f"{prefix}.v.{i}"] = v
        return out

    def load_state_tensors(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        self.state.step = int(arrays[f"{prefix}.step"][0])
        if f"{prefix}.m.0" in arrays:
            self.state.m = [arrays[f"{prefix}.m.{i}"].copy() for i in range(len(self.params))]
            self.state.v = [arrays[f"{prefix}.v.{i}"].copy() for i in range(len(self.params))]
        else:
            self.state.m, self.state.v = [], []
