"""Video patch discriminator, image discriminator, contrastive embedder, memory bank."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .conv import conv3d, conv_output_extent
from .nn import Conv2d, Conv3d, Linear, Mlp, Module, instance_norm3d
from .tensor import Tensor

# Kernel 4 in every dim, padding 1. Temporal stride is 1 by default: a stride
# of 2 in time collapses the 7-step in-domain input before the last layer.
DV_KERNEL = (4, 4, 4)
DV_PAD = (1, 1, 1)
DV_TABLE_CHANNELS = (64, 128, 256, 512, 1)
DV_TABLE_STRIDES = (2, 2, 2, 1, 1)
DV_TABLE_NORM = (False, True, True, True, False)


@dataclass(frozen=True)
class VideoDiscConfig:
    channels: Sequence[int] = (8, 16, 32, 32, 1)
    strides: Sequence[int] = DV_TABLE_STRIDES
    temporal_stride: int = 1
    scales: int = 2
    shared_weights: bool = False

    def __post_init__(self):
        if len(self.channels) != len(self.strides):
            raise ValueError("video disc: channels and strides differ in length")
        if self.channels[-1] != 1:
            raise ValueError("video disc: last layer must emit one logit channel")
        if self.scales < 1:
            raise ValueError("video disc: need at least one scale")

    def scale_strides(self, scale: int) -> tuple[int, ...]:
        """Spatial strides at ``scale``: each coarser scale turns its last stride-2 layer into stride 1."""
        strides = list(self.strides)
        for _ in range(scale):
            for i in range(len(strides) - 1, -1, -1):
                if strides[i] > 1:
                    strides[i] = 1
                    break
        return tuple(strides)

    @property
    def norms(self) -> tuple[bool, ...]:
        n = len(self.channels)
        return tuple(0 < i < n - 1 for i in range(n))


class PatchStack3d(Module):
    """Conv3d stack; first/last layers unnormalized, last layer linear."""

    def __init__(self, c_in: int, cfg: VideoDiscConfig, rng, dtype=np.float32):
        self.convs = []
        self._norms = cfg.norms
        prev = c_in
        for c_out, norm in zip(cfg.channels, self._norms):
            # a bias before instance norm is cancelled by the mean subtraction
            self.convs.append(Conv3d(prev, c_out, DV_KERNEL, 1, DV_PAD, rng, dtype, bias=not norm))
            prev = c_out

    @staticmethod
    def output_extents(extents, strides) -> tuple[int, int, int]:
        t, h, w = extents
        for st, sh, sw in strides:
            t, h, w = (
                conv_output_extent(t, DV_KERNEL[0], st, DV_PAD[0]),
                conv_output_extent(h, DV_KERNEL[1], sh, DV_PAD[1]),
                conv_output_extent(w, DV_KERNEL[2], sw, DV_PAD[2]),
            )
            if min(t, h, w) < 1:
                raise ValueError(f"video disc: extent collapses below 1 (input {tuple(extents)})")
        return t, h, w

    def forward(self, x: Tensor, strides) -> Tensor:
        last = len(self.convs) - 1
        for i, (conv, stride) in enumerate(zip(self.convs, strides)):
            x = conv3d(x, conv.weight, conv.bias, stride, DV_PAD)
            if self._norms[i]:
                x = instance_norm3d(x)
            if i < last:
                x = T.leaky_relu(x, 0.2)
        return x


def downsample2x(x: Tensor) -> Tensor:
    """2×2 spatial average pooling of N×C×T×H×W (H, W even)."""
    n, c, t, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError("downsample2x: spatial extents must be even")
    y = T.reshape(x, (n, c, t, h // 2, 2, w // 2, 2))
    return T.mean(y, axis=(4, 6))


class VideoDiscriminator(Module):
    """Multi-scale 3-D PatchGAN; scale s sees the input downsampled s times."""

    def __init__(self, in_channels: int, cfg: VideoDiscConfig = VideoDiscConfig(), seed=0, dtype=np.float32):
        rng = np.random.default_rng([seed, 0xD5])
        self._cfg = cfg
        self.in_channels = in_channels
        count = 1 if cfg.shared_weights else cfg.scales
        self.stacks = [PatchStack3d(in_channels, cfg, rng, dtype) for _ in range(count)]

    @property
    def config(self) -> VideoDiscConfig:
        return self._cfg

    def _stack(self, s: int) -> PatchStack3d:
        return self.stacks[0 if self._cfg.shared_weights else s]

    def layer_strides(self, scale: int) -> list[tuple[int, int, int]]:
        st = self._cfg.temporal_stride
        return [(st, s, s) for s in self._cfg.scale_strides(scale)]

    def check_input(self, extents: tuple[int, int, int]) -> list[tuple[int, int, int]]:
        """Logit-grid extents per scale; raises if any layer collapses."""
        t, h, w = extents
        return [
            PatchStack3d.output_extents((t, h >> s, w >> s), self.layer_strides(s))
            for s in range(self._cfg.scales)
        ]

    def forward(self, x: Tensor) -> list[Tensor]:
        """Per-scale logit grids, each N×1×T'×H'×W'."""
        if x.shape[1] != self.in_channels:
            raise ValueError(f"video disc: expected {self.in_channels} channels, got {x.shape[1]}")
        self.check_input(x.shape[2:])
        grids = []
        for s in range(self._cfg.scales):
            if s:
                x = downsample2x(x)
            grids.append(self._stack(s)(x, self.layer_strides(s)))
        return grids

    def logits(self, x: Tensor) -> Tensor:
        """Patch logits averaged per scale, then across scales: one logit per clip."""
        grids = self.forward(x)
        means = [T.mean(g, axis=(1, 2, 3, 4)) for g in grids]
        return T.mean(T.stack(means, axis=0), axis=0)


def video_disc_input(frames: Tensor, mode: str = "in") -> Tensor:
    """Arrange N×n×c×h×w frames for D_V.

    ``in``: each of the n-1 later frames is channel-concatenated with frame 1,
    giving N×2c×(n-1)×h×w. ``cross``: all n frames as N×c×n×h×w.
    """
    frames = T.as_tensor(frames)
    n = frames.shape[1]
    if mode == "in":
        if n < 2:
            raise ValueError("video_disc_input: in-domain mode needs n >= 2 frames")
        first = frames[:, 0:1]
        rest = frames[:, 1:]
        first = first * np.ones((1, n - 1, 1, 1, 1), dtype=frames.dtype)
        x = T.concat([first, rest], axis=2)
    elif mode == "cross":
        x = frames
    else:
        raise ValueError(f"unknown domain mode {mode!r}")
    return T.transpose(x, (0, 2, 1, 3, 4))


def video_disc_forward(clip: Tensor, dv: VideoDiscriminator, mode: str = "in") -> list[Tensor]:
    return dv(video_disc_input(clip, mode))


class ImageDiscriminator(Module):
    """Conv trunk with channel doubling, global sum pooling and a linear logit head."""

    def __init__(self, image_channels=3, image_size=32, channels=(8, 16, 32, 64), seed=0, dtype=np.float32):
        rng = np.random.default_rng([seed, 0xD1])
        self.image_shape = (image_channels, image_size, image_size)
        self.blocks = []
        prev = image_channels
        size = image_size
        for c in channels:
            self.blocks.append(Conv2d(prev, c, 4, 2, 1, rng, dtype))
            prev = c
            size = conv_output_extent(size, 4, 2, 1)
            if size < 1:
                raise ValueError("image disc: too many blocks for the image size")
        self.head = Linear(prev, 1, rng, dtype)
        self.feature_dim = prev

    def trunk(self, img: Tensor) -> tuple[list[Tensor], Tensor]:
        """Return post-activation block features and the sum-pooled vector."""
        if tuple(img.shape[1:]) != self.image_shape:
            raise ValueError(f"image disc: expected N×{self.image_shape}, got {img.shape}")
        feats = []
        x = img
        for block in self.blocks:
            x = T.leaky_relu(block(x), 0.2)
            feats.append(x)
        pooled = T.tsum(x, axis=(2, 3))
        return feats, pooled

    def forward(self, img: Tensor) -> Tensor:
        _, pooled = self.trunk(img)
        return T.reshape(self.head(pooled), (img.shape[0],))


def image_disc_forward(img: Tensor, di: ImageDiscriminator) -> Tensor:
    img = T.as_tensor(img)
    if img.ndim == 3:
        return di(T.reshape(img, (1,) + img.shape))[0]
    return di(img)


class ContrastiveEmbedder(Module):
    """D_I trunk (without its logit head) plus a 2-layer projection head, L2-normalized."""

    def __init__(self, trunk: ImageDiscriminator, proj_dim: int = 32, seed=0, dtype=np.float32):
        rng = np.random.default_rng([seed, 0xCE])
        self._trunk = trunk
        self.proj = Mlp([trunk.feature_dim, proj_dim, proj_dim], ["relu", "identity"], rng, dtype)

    @property
    def trunk(self) -> ImageDiscriminator:
        return self._trunk

    def all_parameters(self) -> list[Tensor]:
        """Trunk (minus the logit head) and projection parameters."""
        trunk = [p for name, p in self._trunk.named_parameters() if not name.startswith("head.")]
        return trunk + self.parameters()

    def forward(self, img: Tensor) -> Tensor:
        return contrastive_embed(img, self)


def contrastive_embed(img: Tensor, embedder: ContrastiveEmbedder) -> Tensor:
    img = T.as_tensor(img)
    single = img.ndim == 3
    if single:
        img = T.reshape(img, (1,) + img.shape)
    _, pooled = embedder.trunk.trunk(img)
    out = T.normalize(embedder.proj(pooled), axis=-1)
    return out[0] if single else out


def make_ema_copy(embedder: ContrastiveEmbedder) -> ContrastiveEmbedder:
    ema = copy.deepcopy(embedder)
    for p in ema.all_parameters():
        p.requires_grad = False
        p.grad = None
    return ema


def momentum_update(online: Sequence[Tensor], ema: Sequence[Tensor], m_ema: float) -> None:
    """ema <- m·ema + (1-m)·online, tensor by tensor."""
    if not 0 <= m_ema < 1:
        raise ValueError("momentum_update: m_ema must lie in [0, 1)")
    if len(online) != len(ema):
        raise ValueError("momentum_update: parameter lists differ in length")
    for src, dst in zip(online, ema):
        if src.shape != dst.shape:
            raise ValueError(f"momentum_update: shape {src.shape} != {dst.shape}")
        dst.data = (m_ema * dst.data + (1 - m_ema) * src.data).astype(dst.dtype)


class MemoryBank:
    """FIFO queue of unit embeddings with fixed capacity."""

    def __init__(self, capacity: int, dim: int, unit_tol: float = 1e-4):
        if capacity < 1:
            raise ValueError("memory bank capacity must be >= 1")
        self.capacity = capacity
        self.dim = dim
        self.unit_tol = unit_tol
        self._items = np.zeros((0, dim), dtype=np.float32)

    def __len__(self) -> int:
        return self._items.shape[0]

    def enqueue(self, vectors) -> None:
        bank_update(self, vectors)

    def query(self) -> np.ndarray:
        return bank_query(self)

    def tensors(self, prefix="bank.") -> dict[str, np.ndarray]:
        return {f"{prefix}queue": self._items.copy()}

    def load(self, arrays: dict[str, np.ndarray], prefix="bank.") -> None:
        items = np.asarray(arrays[f"{prefix}queue"], dtype=np.float32)
        if items.ndim != 2 or items.shape[1] != self.dim or len(items) > self.capacity:
            raise ValueError("memory bank: stored queue does not fit this bank")
        self._items = items.copy()


def bank_update(bank: MemoryBank, new_negatives) -> MemoryBank:
    vecs = np.asarray(new_negatives.data if isinstance(new_negatives, Tensor) else new_negatives)
    vecs = np.atleast_2d(vecs).astype(np.float32)
    if vecs.shape[1] != bank.dim:
        raise ValueError(f"memory bank: vector dim {vecs.shape[1]} != {bank.dim}")
    norms = np.linalg.norm(vecs, axis=1)
    if np.any(np.abs(norms - 1) > bank.unit_tol):
        raise ValueError("memory bank: only unit-norm vectors may be enqueued")
    items = np.concatenate([bank._items, vecs], axis=0)
    bank._items = items[-bank.capacity :]
    return bank


def bank_query(bank: MemoryBank) -> np.ndarray:
    return bank._items.copy()
