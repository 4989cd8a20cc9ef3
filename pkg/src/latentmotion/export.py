"""Clip export: PNG frame folders, looping GIFs and raw MCTN tensors."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .generator import VideoClip
from .tensorio import save_tensor

FORMATS = ("png-frames", "gif", "mctn")


def to_uint8(frames: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 255] with round-half-even; values outside are clamped first."""
    x = (np.clip(np.asarray(frames, dtype=np.float64), -1.0, 1.0) + 1.0) * 127.5
    return np.rint(x).astype(np.uint8)


def _images(clip: VideoClip) -> list[Image.Image]:
    frames = to_uint8(clip.frames)  # n×c×h×w
    if frames.shape[1] == 1:
        frames = np.repeat(frames, 3, axis=1)
    return [Image.fromarray(f.transpose(1, 2, 0), "RGB") for f in frames]


def export_png_frames(clip: VideoClip, path) -> list[Path]:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, img in enumerate(_images(clip)):
        f = out / f"frame_{i:04d}.png"
        img.save(f, optimize=False)
        files.append(f)
    return files


def export_gif(clip: VideoClip, path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    imgs = _images(clip)
    duration = int(round(1000.0 / clip.fps))
    imgs[0].save(out, save_all=True, append_images=imgs[1:], loop=0, duration=duration)
    return out


def export(clip: VideoClip, fmt: str, path):
    """Write ``clip`` as ``png-frames`` (a folder), ``gif`` or ``mctn``."""
    if fmt == "png-frames":
        return export_png_frames(clip, path)
    if fmt == "gif":
        return export_gif(clip, path)
    if fmt == "mctn":
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_tensor(np.ascontiguousarray(clip.frames), out)
        return out
    raise ValueError(f"unknown export format {fmt!r}")
