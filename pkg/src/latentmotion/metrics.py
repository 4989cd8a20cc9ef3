"""Frame and video metrics: PSNR, SSIM, ACD, blob centroids."""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy import ndimage

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _unit_range(x) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0


def _same_shape(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"metric: shapes {a.shape} and {b.shape} differ")
    return a, b


def psnr(a, b) -> float:
    """PSNR in dB of images in [-1, 1] (rescaled to [0, 1]); identical images give the cap."""
    a, b = _same_shape(a, b)
    mse = float(np.mean((_unit_range(a) - _unit_range(b)) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_kernel1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    g = gaussian_kernel1d(size, sigma)
    return np.outer(g, g)


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation restricted to windows fully inside the image
    k = g.size
    x = ndimage.correlate1d(x, g, axis=0, mode="constant")
    x = ndimage.correlate1d(x, g, axis=1, mode="constant")
    lo = k // 2
    return x[lo : x.shape[0] - (k - 1 - lo), lo : x.shape[1] - (k - 1 - lo)]


def ssim_map(a: np.ndarray, b: np.ndarray, win: np.ndarray | None = None) -> np.ndarray:
    """Local SSIM for one 2-D channel in [0, 1], over every full window position."""
    win = gaussian_kernel1d() if win is None else win
    if a.shape[0] < win.size or a.shape[1] < win.size:
        raise ValueError("ssim: image smaller than the window")
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    mu_a, mu_b = _filter_valid(a, win), _filter_valid(b, win)
    saa = _filter_valid(a * a, win) - mu_a**2
    sbb = _filter_valid(b * b, win) - mu_b**2
    sab = _filter_valid(a * b, win) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * sab + c2)) / ((mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2))


def ssim(a, b) -> float:
    """Mean SSIM over channels and window positions for c×h×w (or h×w) images in [-1, 1]."""
    a, b = _same_shape(a, b)
    a, b = _unit_range(a), _unit_range(b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ValueError(f"ssim: expected c×h×w images, got {a.shape}")
    return float(np.mean([ssim_map(x, y).mean() for x, y in zip(a, b)]))


def pixel_embedder(frames: np.ndarray, factor: int = 4) -> np.ndarray:
    """Model-free embedding: average-pool by ``factor`` and flatten (n×c×h×w -> n×D)."""
    frames = np.asarray(frames, dtype=np.float64)
    n, c, h, w = frames.shape
    hf, wf = h // factor, w // factor
    x = frames[:, :, : hf * factor, : wf * factor].reshape(n, c, hf, factor, wf, factor)
    return x.mean(axis=(3, 5)).reshape(n, -1)


def acd(clip, embedder: Callable[[np.ndarray], np.ndarray] = pixel_embedder) -> float:
    """Average content distance: mean L2 distance of frame embeddings to their temporal mean."""
    frames = np.asarray(getattr(clip, "frames", clip))
    if frames.shape[0] < 2:
        raise ValueError("acd: clip needs at least two frames")
    emb = np.asarray(embedder(frames), dtype=np.float64)
    # offsets from frame 1 keep a static clip at exactly zero
    offsets = emb - emb[:1]
    return float(np.linalg.norm(offsets - offsets.mean(axis=0, keepdims=True), axis=1).mean())


def blob_centroids(frames) -> np.ndarray:
    """Intensity-weighted (x, y) centroids of n×c×h×w frames; weight = channel mean of (x+1)/2."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4:
        raise ValueError(f"blob_centroids: expected n×c×h×w frames, got {frames.shape}")
    weight = _unit_range(frames).mean(axis=1)
    n, h, w = weight.shape
    mass = weight.sum(axis=(1, 2))
    mass = np.where(mass > 0, mass, 1.0)
    xs, ys = np.arange(w), np.arange(h)
    cx = (weight.sum(axis=1) * xs).sum(axis=1) / mass
    cy = (weight.sum(axis=2) * ys).sum(axis=1) / mass
    out = np.stack([cx, cy], axis=1)
    out[weight.sum(axis=(1, 2)) == 0] = [(w - 1) / 2, (h - 1) / 2]
    return out


def mean_displacement(clips) -> float:
    """Mean per-frame centroid displacement (pixels) over a batch of N×n×c×h×w clips."""
    clips = np.asarray(clips)
    if clips.ndim == 4:
        clips = clips[None]
    steps = [np.linalg.norm(np.diff(blob_centroids(c), axis=0), axis=1) for c in clips]
    return float(np.mean(np.concatenate(steps)))
