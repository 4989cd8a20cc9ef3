"""Video clip sources: synthetic moving-blob clips and folders of PNG frames."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .generator import BlobDecoder
from .metrics import mean_displacement
from .tensor import Tensor

MOTIONS = ("linear", "sine", "mixed", "static")
_FRAME_RE = re.compile(r"(\d+)\.png$", re.IGNORECASE)


@dataclass
class ClipDataset:
    clips: np.ndarray  # count×n×c×h×w in [-1, 1]
    source: str = "synthetic"
    stride: int = 1
    fps: float = 8.0
    factors: np.ndarray | None = None  # count×n×F blob parameters (synthetic only)
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.clips.ndim != 5 or len(self.clips) < 1:
            raise ValueError(f"dataset: expected count×n×c×h×w clips, got {self.clips.shape}")

    def __len__(self) -> int:
        return self.clips.shape[0]

    @property
    def n_frames(self) -> int:
        return self.clips.shape[1]

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return tuple(self.clips.shape[2:])

    def sample_batch(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        idx = rng.integers(len(self), size=batch)
        return self.clips[idx]

    def mean_displacement(self) -> float:
        """Ground-truth mean per-frame blob-centroid displacement in pixels."""
        return mean_displacement(self.clips)


@dataclass(frozen=True)
class SyntheticConfig:
    count: int = 256
    n_frames: int = 8
    motion: str = "mixed"
    drift: float = 0.1  # max per-frame change of each position factor
    position_range: float = 0.6  # paths stay inside [-range, range]
    radius_range: tuple[float, float] = (-1.0, 0.0)
    intensity_range: tuple[float, float] = (0.4, 1.0)

    def __post_init__(self):
        if self.count < 1 or self.n_frames < 1:
            raise ValueError("synthetic dataset: count and n_frames must be >= 1")
        if self.motion not in MOTIONS:
            raise ValueError(f"synthetic dataset: unknown motion {self.motion!r}")
        if self.drift < 0:
            raise ValueError("synthetic dataset: drift must be >= 0")


def _position_path(rng, cfg: SyntheticConfig, kind: str) -> np.ndarray:
    """One n-step path of a single position factor."""
    n, lim = cfg.n_frames, cfg.position_range
    t = np.arange(n)
    if kind == "static" or cfg.drift == 0:
        return np.full(n, rng.uniform(-lim, lim))
    if kind == "linear":
        delta = rng.uniform(-cfg.drift, cfg.drift)
        span = abs(delta) * (n - 1)
        start = rng.uniform(-lim, lim - span) if delta >= 0 else rng.uniform(-lim + span, lim)
        return start + delta * t
    # sine: amplitude chosen so the peak per-frame speed is at most drift
    omega = rng.uniform(0.3, 0.9)
    amp = rng.uniform(0.3, 1.0) * cfg.drift / omega
    phase = rng.uniform(0, 2 * np.pi)
    wave = amp * (np.sin(omega * t + phase) - np.sin(phase))
    lo, hi = -lim - wave.min(), lim - wave.max()
    return rng.uniform(lo, hi) + wave


def synthetic_factors(cfg: SyntheticConfig, rng: np.random.Generator, blobs: int = 1) -> np.ndarray:
    """count×n×(4·blobs) factor paths in blob-parameter space."""
    out = np.empty((cfg.count, cfg.n_frames, 4 * blobs))
    for i in range(cfg.count):
        kind = cfg.motion if cfg.motion != "mixed" else ("linear" if rng.random() < 0.5 else "sine")
        for b in range(blobs):
            o = 4 * b
            out[i, :, o] = _position_path(rng, cfg, kind)
            out[i, :, o + 1] = _position_path(rng, cfg, kind)
            out[i, :, o + 2] = rng.uniform(*cfg.radius_range)
            out[i, :, o + 3] = rng.uniform(*cfg.intensity_range)
    return out


def make_synthetic_dataset(cfg: SyntheticConfig, gen: BlobDecoder, rng: np.random.Generator) -> ClipDataset:
    """Moving-blob clips rendered with ``gen``'s renderer, so real frames share its look."""
    blobs = gen.n_factors // 4
    factors = synthetic_factors(cfg, rng, blobs)
    c, h, w = gen.spec.image_shape
    flat = Tensor(factors.reshape(-1, 4 * blobs).astype(np.float32))
    frames = gen.render(flat).data.reshape(cfg.count, cfg.n_frames, c, h, w)
    return ClipDataset(frames.astype(np.float32), "synthetic", 1, factors=factors)


def _frame_index(path: Path) -> int:
    m = _FRAME_RE.search(path.name)
    if m is None:
        raise ValueError(f"frame folder: cannot read a frame number from {path.name}")
    return int(m.group(1))


def read_png(path) -> np.ndarray:
    """Load a PNG as c×h×w floats in [-1, 1] (RGB)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr.transpose(2, 0, 1) / 127.5 - 1.0


def load_frame_folder(path, n_frames: int = 8, stride: int = 2, rng: np.random.Generator | None = None,
                      fps: float = 8.0) -> ClipDataset:
    """Read one clip per subfolder: ``stride``-subsampled runs of ``n_frames`` frames.

    A window of ``stride·n_frames`` consecutive frames starts at 0, or at a
    random offset when ``rng`` is given. Subfolders holding fewer frames are
    skipped with a warning; gaps in the numbering and mismatched image sizes
    are errors.
    """
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"frame folder {root} does not exist")
    if n_frames < 1 or stride < 1:
        raise ValueError("frame folder: n_frames and stride must be >= 1")
    need = stride * n_frames
    clips, names, shape = [], [], None
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(sub.glob("*.png"), key=_frame_index)
        index = [_frame_index(f) for f in files]
        if index and index != list(range(index[0], index[0] + len(index))):
            raise ValueError(f"frame folder {sub.name}: missing frames in the numbering")
        if len(files) < need:
            warnings.warn(f"skipping {sub.name}: {len(files)} frames < {need} needed")
            continue
        start = 0 if rng is None else int(rng.integers(len(files) - need + 1))
        frames = [read_png(files[start + stride * i]) for i in range(n_frames)]
        for f in frames:
            if shape is None:
                shape = f.shape
            elif f.shape != shape:
                raise ValueError(f"frame folder {sub.name}: image size {f.shape} != {shape}")
        clips.append(np.stack(frames))
        names.append(sub.name)
    if not clips:
        raise ValueError(f"frame folder {root}: no usable clips")
    return ClipDataset(np.stack(clips).astype(np.float32), "frame-folder", stride, fps, names=names)
