"""Augmentation policy for the contrastive image discriminator.

Order: affine (rotation, translation, scale) -> brightness -> colour shift on
one channel -> cutout -> horizontal flip. Operates on numpy images (c×h×w in
[-1, 1]); augmented images are inputs to the embedder, so no gradients are
needed through this stage.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class AugPolicy:
    rotation: tuple[float, float] = (-180.0, 180.0)  # degrees
    translation: tuple[float, float] = (-0.1, 0.1)  # fraction of image size
    scale: tuple[float, float] = (0.95, 1.05)
    brightness: tuple[float, float] = (-0.5, 0.5)
    color: tuple[float, float] = (-0.5, 0.5)
    cutout: tuple[float, float] = (0.0, 0.25)  # side fraction
    flip_prob: float = 0.5
    fill: float = -1.0  # value for pixels rotated in from outside the frame

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple) and value[0] > value[1]:
                raise ValueError(f"aug policy: {f.name} range is reversed")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("aug policy: flip_prob must lie in [0, 1]")
        if not (0 <= self.cutout[0] and self.cutout[1] <= 1):
            raise ValueError("aug policy: cutout fraction must lie in [0, 1]")


@dataclass(frozen=True)
class AugParams:
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    scale: float = 1.0
    brightness: float = 0.0
    color_channel: int = 0
    color: float = 0.0
    cutout: float = 0.0
    cutout_y: float = 0.0  # start as a fraction of the free range
    cutout_x: float = 0.0
    flip: bool = False


IDENTITY = AugParams()


def sample_params(rng: np.random.Generator, policy: AugPolicy, channels: int = 3) -> AugParams:
    u = rng.uniform
    return AugParams(
        rotation=u(*policy.rotation),
        tx=u(*policy.translation),
        ty=u(*policy.translation),
        scale=u(*policy.scale),
        brightness=u(*policy.brightness),
        color_channel=int(rng.integers(channels)),
        color=u(*policy.color),
        cutout=u(*policy.cutout),
        cutout_y=u(),
        cutout_x=u(),
        flip=bool(rng.random() < policy.flip_prob),
    )


def _affine(img: np.ndarray, p: AugParams, fill: float) -> np.ndarray:
    if p.rotation == 0 and p.tx == 0 and p.ty == 0 and p.scale == 1:
        return img.copy()
    _, h, w = img.shape
    theta = np.deg2rad(p.rotation)
    cos, sin = np.cos(theta), np.sin(theta)
    # affine_transform maps output coords to input coords: in = M·out + offset
    inv = np.array([[cos, sin], [-sin, cos]]) / p.scale
    center = np.array([(h - 1) / 2, (w - 1) / 2])
    shift = np.array([p.ty * h, p.tx * w])
    offset = center - inv @ (center + shift)
    out = np.empty_like(img)
    for ch in range(img.shape[0]):
        out[ch] = ndimage.affine_transform(img[ch], inv, offset, order=1, mode="constant", cval=fill)
    return out


def cutout_box(h: int, w: int, p: AugParams) -> tuple[int, int, int, int]:
    """(y0, x0, height, width) of the masked region; it always lies inside the image."""
    ch, cw = int(round(p.cutout * h)), int(round(p.cutout * w))
    y0 = int(p.cutout_y * (h - ch + 1)) if ch else 0
    x0 = int(p.cutout_x * (w - cw + 1)) if cw else 0
    return min(y0, h - ch), min(x0, w - cw), ch, cw


def apply_params(img: np.ndarray, p: AugParams, fill: float = -1.0) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"augment: expected c×h×w image, got {img.shape}")
    out = _affine(img, p, fill)
    if p.brightness:
        out = out + p.brightness
    if p.color:
        out[p.color_channel] = out[p.color_channel] + p.color
    y0, x0, ch, cw = cutout_box(img.shape[1], img.shape[2], p)
    if ch and cw:
        out[:, y0 : y0 + ch, x0 : x0 + cw] = 0.0
    if p.flip:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out, dtype=img.dtype)


def augment(img: np.ndarray, rng: np.random.Generator, policy: AugPolicy = AugPolicy()) -> np.ndarray:
    """Sample parameters from ``policy`` and apply them to one image."""
    return apply_params(img, sample_params(rng, policy, img.shape[0]), policy.fill)


def augment_batch(imgs: np.ndarray, seed, policy: AugPolicy = AugPolicy()) -> np.ndarray:
    """Augment each image with its own stream derived from (seed, sample index)."""
    seed = [int(s) for s in np.atleast_1d(seed)]
    return np.stack([augment(x, np.random.default_rng(seed + [i]), policy) for i, x in enumerate(imgs)])
