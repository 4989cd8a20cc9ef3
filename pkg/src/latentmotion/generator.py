"""Fixed image generators: the blob decoders and an external-MLP loader.

A generator maps latent codes (B×d) to images (B×c×h×w) in [-1, 1]. Its
parameters are stored as plain arrays, so no gradient ever reaches them,
while gradients with respect to the codes flow normally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint
from .latent import MappingNetwork, map_to_w, sample_z
from .tensor import Tensor

BLOB_MIN_RADIUS = 2.0
BLOB_RADIUS_SPAN = 3.0


@dataclass(frozen=True)
class GeneratorSpec:
    latent_dim: int
    channels: int
    height: int
    width: int
    mode: str = "z"  # z-space or w-space codes
    deterministic: bool = True

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ValueError("generator images must be at least 8×8")
        if self.channels not in (1, 3):
            raise ValueError("generator channels must be 1 or 3")
        if self.mode not in ("z", "w"):
            raise ValueError(f"unknown latent mode {self.mode!r}")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)


@dataclass
class VideoClip:
    frames: np.ndarray  # n×c×h×w
    fps: float = 8.0

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[0] < 1:
            raise ValueError(f"VideoClip needs n×c×h×w frames with n >= 1, got {self.frames.shape}")

    def __len__(self) -> int:
        return self.frames.shape[0]

    def clamped(self) -> np.ndarray:
        return np.clip(self.frames, -1.0, 1.0)


class ImageGenerator:
    """Interface for a frozen generator; subclasses implement ``synthesize``."""

    spec: GeneratorSpec
    mapping: MappingNetwork

    def synthesize(self, codes: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, codes):
        return synthesize(self, codes)

    def sample_latent(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw codes from the generator's latent distribution (z, or mapped to w)."""
        z = sample_z(rng, count, self.spec.latent_dim)
        return map_to_w(z, self.mapping) if self.spec.mode == "w" else z

    def state_dict(self) -> dict[str, np.ndarray]:
        raise NotImplementedError


def synthesize(gen: ImageGenerator, code) -> Tensor:
    """Decode one code (d) or a batch (B×d); returns c×h×w or B×c×h×w."""
    code = T.as_tensor(code)
    d = gen.spec.latent_dim
    if code.shape[-1] != d:
        raise ValueError(f"synthesize: code dim {code.shape[-1]} != generator dim {d}")
    if code.ndim == 1:
        return gen.synthesize(T.reshape(code, (1, d)))[0]
    return gen.synthesize(code)


def synthesize_video(gen: ImageGenerator, codes, fps: float = 8.0) -> VideoClip:
    """Render each code of a trajectory (n×d) as one frame."""
    codes = codes.data if isinstance(codes, Tensor) else np.asarray(codes)
    if codes.ndim != 2 or codes.shape[0] < 1:
        raise ValueError("synthesize_video: need a nonempty n×d trajectory")
    frames = gen.synthesize(Tensor(codes.astype(np.float32, copy=False))).data
    return VideoClip(frames, fps)


def _blob_field(u: Tensor, h: int, w: int, offset: int = 0):
    """Return (intensity × gaussian) for the blob described by u[:, offset:offset+4]."""
    b = u.shape[0]
    ux = T.reshape(u[:, offset + 0], (b, 1, 1))
    uy = T.reshape(u[:, offset + 1], (b, 1, 1))
    ur = T.reshape(u[:, offset + 2], (b, 1, 1))
    ua = T.reshape(u[:, offset + 3], (b, 1, 1))
    cx = (ux + 1.0) * (0.5 * (w - 1))
    cy = (uy + 1.0) * (0.5 * (h - 1))
    r = (ur + 1.0) * (0.5 * BLOB_RADIUS_SPAN) + BLOB_MIN_RADIUS
    a = (ua + 1.0) * 0.5
    xs = np.arange(w, dtype=u.dtype).reshape(1, 1, w)
    ys = np.arange(h, dtype=u.dtype).reshape(1, h, 1)
    dx = Tensor(xs) - cx
    dy = Tensor(ys) - cy
    d2 = dx * dx + dy * dy
    g = T.exp(-(d2 / (r * r * 2.0)))
    return a * g  # B×h×w


def render_blob(u: Tensor, tints: np.ndarray, h: int, w: int) -> Tensor:
    """pixel(x, y, ch) = 2·tint_ch·a·exp(-((x-cx)² + (y-cy)²)/(2r²)) - 1."""
    field = _blob_field(u, h, w)
    b = u.shape[0]
    tint = tints.reshape(1, -1, 1, 1).astype(u.dtype)
    return T.reshape(field, (b, 1, h, w)) * (2.0 * tint) - 1.0


def render_two_blobs(u: Tensor, tints: np.ndarray, tints2: np.ndarray, h: int, w: int) -> Tensor:
    """Soft union of two blobs: 2·(1 - (1 - t1·f1)(1 - t2·f2)) - 1."""
    b = u.shape[0]
    f1 = T.reshape(_blob_field(u, h, w, 0), (b, 1, h, w))
    f2 = T.reshape(_blob_field(u, h, w, 4), (b, 1, h, w))
    t1 = tints.reshape(1, -1, 1, 1).astype(u.dtype)
    t2 = tints2.reshape(1, -1, 1, 1).astype(u.dtype)
    union = 1.0 - (1.0 - f1 * t1) * (1.0 - f2 * t2)
    return union * 2.0 - 1.0


class BlobDecoder(ImageGenerator):
    """One Gaussian blob whose position, radius and brightness come from tanh(A·code + b)."""

    n_factors = 4

    def __init__(self, latent_dim=64, image_size=32, channels=3, seed=0, mode="z", mapping_depth=2):
        self.spec = GeneratorSpec(latent_dim, channels, image_size, image_size, mode)
        rng = np.random.default_rng([seed, 0xB10B])
        k = self.n_factors
        self.A = (rng.standard_normal((k, latent_dim)) / np.sqrt(latent_dim)).astype(np.float32)
        self.b = (0.1 * rng.standard_normal(k)).astype(np.float32)
        self.tints = rng.uniform(0.6, 1.0, size=channels).astype(np.float32)
        self.tints2 = rng.uniform(0.3, 0.7, size=channels).astype(np.float32)
        self.mapping = MappingNetwork(latent_dim, mapping_depth if mode == "w" else 0, seed)
        for arr in (self.A, self.b, self.tints, self.tints2):
            arr.setflags(write=False)

    def factors(self, codes: Tensor) -> Tensor:
        codes = T.as_tensor(codes)
        A = self.A.astype(codes.dtype)
        # row-wise reduction instead of a BLAS product, so a code decodes to
        # the same bits whatever batch it is rendered in
        b, d = codes.shape
        proj = T.tsum(T.reshape(codes, (b, 1, d)) * A, axis=-1)
        return T.tanh(proj + self.b.astype(codes.dtype))

    def render(self, u: Tensor) -> Tensor:
        return render_blob(u, self.tints, self.spec.height, self.spec.width)

    def synthesize(self, codes: Tensor) -> Tensor:
        return self.render(self.factors(codes))

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"A": self.A, "b": self.b, "tints": self.tints, "tints2": self.tints2}
        out.update({f"mapping.{k}": v for k, v in self.mapping.state_dict().items()})
        return out


def blob_decode(gen: BlobDecoder, code) -> Tensor:
    return synthesize(gen, code)


class TwoBlobDecoder(BlobDecoder):
    """Eight-factor variant: two blobs driven by shared latent directions."""

    n_factors = 8

    def render(self, u: Tensor) -> Tensor:
        return render_two_blobs(u, self.tints, self.tints2, self.spec.height, self.spec.width)


class ExternalMlpGenerator(ImageGenerator):
    """Generator loaded from an MCKP archive.

    Schema: ``meta.shape`` holds ``[c, h, w]`` and ``layer{i}.weight``
    (out×in) / ``layer{i}.bias`` (out) define an MLP with leaky-ReLU(0.2)
    hidden activations and a tanh output of size c·h·w.
    """

    def __init__(self, tensors: dict[str, np.ndarray], mode="z"):
        c, h, w = (int(v) for v in tensors["meta.shape"])
        self.weights = []
        i = 0
        while f"layer{i}.weight" in tensors:
            self.weights.append(
                (tensors[f"layer{i}.weight"].astype(np.float32), tensors[f"layer{i}.bias"].astype(np.float32))
            )
            i += 1
        if not self.weights:
            raise ValueError("external generator: no layers found")
        if self.weights[-1][0].shape[0] != c * h * w:
            raise ValueError("external generator: last layer size does not match meta.shape")
        self.spec = GeneratorSpec(self.weights[0][0].shape[1], c, h, w, mode)
        self.mapping = MappingNetwork(self.spec.latent_dim, 0)
        self._tensors = dict(tensors)

    @classmethod
    def load(cls, path, mode="z") -> "ExternalMlpGenerator":
        return cls(load_checkpoint(path).tensors, mode)

    def synthesize(self, codes: Tensor) -> Tensor:
        x = codes
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(self.weights):
            x = x @ W.T.astype(codes.dtype) + b.astype(codes.dtype)
            x = T.tanh(x) if i == last else T.leaky_relu(x, 0.2)
        c, h, w = self.spec.image_shape
        return T.reshape(x, (codes.shape[0], c, h, w))

    def state_dict(self) -> dict[str, np.ndarray]:
        return dict(self._tensors)


def make_generator(kind: str, latent_dim: int, image_size: int, seed: int, mode: str = "z",
                   channels: int = 3, path=None) -> ImageGenerator:
    if kind == "blob":
        return BlobDecoder(latent_dim, image_size, channels, seed, mode)
    if kind == "two_blob":
        return TwoBlobDecoder(latent_dim, image_size, channels, seed, mode)
    if kind == "external":
        if path is None:
            raise ValueError("external generator needs a checkpoint path")
        return ExternalMlpGenerator.load(path, mode)
    raise ValueError(f"unknown generator kind {kind!r}")
