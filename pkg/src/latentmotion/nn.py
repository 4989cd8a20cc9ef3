"""Network building blocks: parameter containers, LSTM cell, MLP, conv, instance norm."""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .conv import conv2d, conv3d
from .tensor import Tensor

ACTIVATIONS = {
    "identity": lambda x: x,
    "tanh": T.tanh,
    "sigmoid": T.sigmoid,
    "relu": T.relu,
    "leaky_relu": lambda x: T.leaky_relu(x, 0.2),
}


def apply_activation(x: Tensor, tag: str) -> Tensor:
    try:
        return ACTIVATIONS[tag](x)
    except KeyError:
        raise ValueError(f"unknown activation {tag!r}") from None


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def normal_init(rng: np.random.Generator, shape, std: float, dtype) -> Tensor:
    return Tensor((rng.standard_normal(shape) * std).astype(dtype), requires_grad=True)


class Module:
    """Attribute-scanning parameter container.

    Every ``Tensor`` attribute is a parameter (constants live in plain numpy
    arrays); submodules are ``Module`` attributes or lists of modules. Names follow attribute
    insertion order, so they are stable across runs.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, p in self.named_parameters():
            key = prefix + name
            if key not in arrays:
                raise KeyError(f"missing tensor {key!r}")
            arr = arrays[key]
            if arr.shape != p.shape:
                raise ValueError(f"{key}: shape {arr.shape} != {p.shape}")
            p.data = np.array(arr, dtype=p.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def frozen(self) -> "_Frozen":
        """Context manager that stops gradient tracking for these parameters."""
        return _Frozen(self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class _Frozen:
    def __init__(self, params: list[Tensor]):
        self.params = params

    def __enter__(self):
        for p in self.params:
            p.requires_grad = False
        return self

    def __exit__(self, *exc):
        for p in self.params:
            p.requires_grad = True
        return False


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32, bias=True):
        self.weight = uniform_fan_in(rng, (d_out, d_in), d_in, dtype)
        self.bias = uniform_fan_in(rng, (d_out,), d_in, dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[1]:
            raise ValueError(f"linear: input dim {x.shape[-1]} != {self.weight.shape[1]}")
        y = x @ self.weight.T
        return y if self.bias is None else y + self.bias


class Mlp(Module):
    """Stack of affine layers, each followed by its own activation tag."""

    def __init__(self, dims: Sequence[int], activations: Sequence[str], rng, dtype=np.float32):
        if len(activations) != len(dims) - 1:
            raise ValueError("mlp: need one activation per layer")
        self.layers = [Linear(a, b, rng, dtype) for a, b in zip(dims[:-1], dims[1:])]
        self._activations = list(activations)

    @property
    def activations(self) -> list[str]:
        return self._activations

    def forward(self, x: Tensor) -> Tensor:
        return mlp_forward(x, self)


def mlp_forward(x: Tensor, mlp: Mlp) -> Tensor:
    for layer, act in zip(mlp.layers, mlp.activations):
        x = apply_activation(layer(x), act)
    return x


class LSTMCell(Module):
    """Single LSTM cell; fused gate rows are ordered (input, forget, cell, output)."""

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator, dtype=np.float32):
        self.d_in, self.d_h = d_in, d_h
        self.w_ih = uniform_fan_in(rng, (4 * d_h, d_in), d_in, dtype)
        self.w_hh = uniform_fan_in(rng, (4 * d_h, d_h), d_h, dtype)
        self.bias = uniform_fan_in(rng, (4 * d_h,), d_h, dtype)

    def zero_state(self, batch: int) -> tuple[Tensor, Tensor]:
        dtype = self.w_ih.dtype
        z = np.zeros((batch, self.d_h), dtype=dtype)
        return Tensor(z), Tensor(z.copy())

    def forward(self, x: Tensor, state=None) -> tuple[Tensor, Tensor]:
        return lstm_cell(x, state, self)


def lstm_cell(x: Tensor, state, params: LSTMCell) -> tuple[Tensor, Tensor]:
    """One LSTM step on a batch ``x`` (B×d_in); ``state`` defaults to zeros."""
    if x.shape[-1] != params.d_in:
        raise ValueError(f"lstm: input dim {x.shape[-1]} != {params.d_in}")
    if state is None:
        state = params.zero_state(x.shape[0])
    h_prev, c_prev = state
    if h_prev.shape[-1] != params.d_h or c_prev.shape[-1] != params.d_h:
        raise ValueError("lstm: state dim mismatch")
    g = params.d_h
    gates = x @ params.w_ih.T + h_prev @ params.w_hh.T + params.bias
    i = T.sigmoid(gates[:, 0:g])
    f = T.sigmoid(gates[:, g : 2 * g])
    cand = T.tanh(gates[:, 2 * g : 3 * g])
    o = T.sigmoid(gates[:, 3 * g : 4 * g])
    c = f * c_prev + i * cand
    h = o * T.tanh(c)
    return h, c


class Conv3d(Module):
    def __init__(self, c_in, c_out, kernel, stride, pad, rng, dtype=np.float32, bias=True, std=0.02):
        kernel = (kernel,) * 3 if isinstance(kernel, int) else tuple(kernel)
        self.weight = normal_init(rng, (c_out, c_in) + kernel, std, dtype)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None
        self._stride = stride
        self._pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return conv3d(x, self.weight, self.bias, self._stride, self._pad)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, stride, pad, rng, dtype=np.float32, std=0.02):
        self.weight = normal_init(rng, (c_out, c_in, kernel, kernel), std, dtype)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)
        self._stride = stride
        self._pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self._stride, self._pad)


def instance_norm3d(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardization over T×H×W (no affine)."""
    if x.ndim not in (4, 5):
        raise ValueError(f"instance_norm3d: expected C×T×H×W or N×C×T×H×W, got {x.shape}")
    axes = (-3, -2, -1)
    if int(np.prod(x.shape[-3:])) < 2:
        raise ValueError("instance_norm3d: each channel needs at least two elements")
    mu = T.mean(x, axis=axes, keepdims=True)
    centered = x - mu
    var = T.mean(centered * centered, axis=axes, keepdims=True)
    return centered * T.power(var + eps, -0.5)
