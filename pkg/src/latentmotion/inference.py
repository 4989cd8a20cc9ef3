"""Video generation, long unrolling, trajectory interpolation, inversion and prediction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import tensor as T
from .generator import ImageGenerator, VideoClip, synthesize_video
from .motion import MotionGenerator, Trajectory
from .optim import Adam
from .tensor import NonFiniteError, Tensor


class HasGenerators(Protocol):
    gm: MotionGenerator
    gen: ImageGenerator


def draw_eps(eps_seed: int, steps: int, dim: int) -> np.ndarray:
    """Noise sequence for one video; a longer draw extends a shorter one row by row."""
    return np.random.default_rng(eps_seed).standard_normal((steps, dim)).astype(np.float32)


def sample_trajectory(z1, n: int, eps_seed: int, models: HasGenerators) -> Trajectory:
    if n < 1:
        raise ValueError("sample_trajectory: n must be >= 1")
    z1 = np.asarray(z1, dtype=np.float32).reshape(-1)
    eps = draw_eps(eps_seed, n - 1, z1.shape[0])
    return models.gm(z1, eps)


def generate_video(z1, n: int, eps_seed: int, models: HasGenerators, fps: float = 8.0) -> VideoClip:
    traj = sample_trajectory(z1, n, eps_seed, models)
    return synthesize_video(models.gen, traj.codes.data[0], fps)


def unroll(z1, n_long: int, models: HasGenerators, eps_seed: int = 0, fps: float = 8.0) -> VideoClip:
    """Continue the decoder recurrence for ``n_long`` frames; no upper bound is imposed."""
    return generate_video(z1, n_long, eps_seed, models, fps)


def interpolate_trajectory(traj, factor: int):
    """Insert ``factor - 1`` evenly spaced codes between consecutive codes.

    Accepts an n×d array (returned as float64) or a ``Trajectory`` (first
    batch item; returned as a noise-free ``Trajectory``).
    """
    is_traj = isinstance(traj, Trajectory)
    codes = np.asarray(traj.codes.data[0] if is_traj else traj, dtype=np.float64)
    if int(factor) != factor or factor < 1:
        raise ValueError("interpolate_trajectory: factor must be an integer >= 1")
    if codes.ndim != 2 or codes.shape[0] < 2:
        raise ValueError("interpolate_trajectory: need at least two codes")
    factor = int(factor)
    a, b = codes[:-1], codes[1:]
    frac = (np.arange(factor) / factor)[None, :, None]
    inner = a[:, None, :] + frac * (b - a)[:, None, :]
    out = np.concatenate([inner.reshape(-1, codes.shape[1]), codes[-1:]], axis=0)
    if not is_traj:
        return out
    return Trajectory(Tensor(out[None]), None, None)


@dataclass(frozen=True)
class InversionConfig:
    iterations: int = 2000
    lambda_vgg: float = 1.0
    lr: float = 0.01
    seed: int = 0
    restarts: int = 8
    restart_iterations: int = 100

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("inversion: iterations must be >= 1")
        if self.lambda_vgg < 0:
            raise ValueError("inversion: lambda_vgg must be >= 0")
        if self.lr <= 0:
            raise ValueError("inversion: lr must be > 0")
        if self.restarts < 1 or self.restart_iterations < 0:
            raise ValueError("inversion: restarts must be >= 1 and restart_iterations >= 0")


@dataclass
class InversionResult:
    z: np.ndarray
    loss: float
    pixel_loss: float
    history: list[float] = field(default_factory=list)  # best-so-far objective per iteration


FeatureFn = Callable[[Tensor], list[Tensor]]


def _objective(z: Tensor, target: Tensor, gen: ImageGenerator, features: FeatureFn | None,
               target_feats, lambda_vgg: float) -> tuple[Tensor, Tensor]:
    img = gen.synthesize(z)
    diff = img - target
    pixel = T.sqrt(T.tsum(diff * diff) + 1e-12)
    total = pixel
    if features is not None and lambda_vgg > 0:
        for f, tf in zip(features(img), target_feats):
            d = f - tf
            total = total + T.sqrt(T.tsum(d * d) + 1e-12) * lambda_vgg
    return total, pixel


def _descend(z0: np.ndarray, steps: int, target, gen, features, target_feats, cfg: InversionConfig):
    """Adam for ``steps`` updates; returns best (z, objective, pixel term) and every objective seen."""
    z = Tensor(z0.copy(), requires_grad=True)
    opt = Adam([z], lr=cfg.lr, betas=(0.9, 0.999))
    best = (z0.copy(), np.inf, np.inf)
    seen = []
    for i in range(steps + 1):
        loss, pixel = _objective(z, target, gen, features, target_feats, cfg.lambda_vgg)
        value = float(loss.item())
        if not np.isfinite(value):
            raise NonFiniteError("inversion: non-finite objective")
        seen.append(value)
        if value < best[1]:
            best = (z.data.copy(), value, float(pixel.item()))
        if i == steps:
            break
        opt.zero_grad()
        loss.backward()
        opt.step()
    return best, seen


def invert_frame(x, gen: ImageGenerator, cfg: InversionConfig = InversionConfig(),
                 features: FeatureFn | None = None) -> InversionResult:
    """min_z ||x - G(z)||₂ + λ_vgg·Σ_l ||F_l(x) - F_l(G(z))||₂ by Adam from seeded starts.

    With ``cfg.restarts > 1`` each random start first runs a short scouting
    descent and the best one continues; scouting and refinement together use
    ``cfg.iterations`` updates. The returned code is the best one evaluated.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.shape != gen.spec.image_shape:
        raise ValueError(f"invert_frame: image {x.shape} != generator output {gen.spec.image_shape}")
    target = Tensor(x[None])
    target_feats = None
    if features is not None and cfg.lambda_vgg > 0:
        target_feats = [f.detach() for f in features(target)]
    rng = np.random.default_rng([cfg.seed, 0x1417])
    starts = gen.sample_latent(rng, cfg.restarts).astype(np.float32)
    scout = 0
    if cfg.restarts > 1:
        scout = min(cfg.restart_iterations, cfg.iterations // (2 * cfg.restarts))
    seen: list[float] = []
    best = (starts[:1], np.inf, np.inf)
    if scout:
        for s in starts:
            cand, values = _descend(s[None], scout, target, gen, features, target_feats, cfg)
            seen += values
            if cand[1] < best[1]:
                best = cand
    cand, values = _descend(best[0], cfg.iterations - scout * len(starts), target, gen, features,
                            target_feats, cfg)
    seen += values
    if cand[1] <= best[1]:
        best = cand
    history = np.minimum.accumulate(np.asarray(seen)).tolist()
    return InversionResult(best[0][0], best[1], best[2], history)


@dataclass
class Prediction:
    clip: VideoClip
    z_hat: np.ndarray
    inversion: InversionResult
    codes: np.ndarray


def predict_video(x1, models: HasGenerators, cfg: InversionConfig = InversionConfig(), n: int = 8,
                  eps_seed: int = 0, interpolate_factor: int = 1, features: FeatureFn | None = None,
                  fps: float = 8.0) -> Prediction:
    """Invert ``x1``, then run the motion generator from the recovered code."""
    inv = invert_frame(x1, models.gen, cfg, features)
    z_hat = inv.z.astype(np.float32)
    traj = sample_trajectory(z_hat, n, eps_seed, models)
    codes = traj.codes.data[0]
    if interpolate_factor > 1:
        codes = interpolate_trajectory(codes, interpolate_factor).astype(np.float32)
        codes[0] = z_hat
    return Prediction(synthesize_video(models.gen, codes, fps), z_hat, inv, codes)


def diversity_std(z1, count: int, models: HasGenerators, n: int = 8, eps_seed: int = 0) -> np.ndarray:
    """Per-frame mean over pixels of the across-video std, for ``count`` videos sharing ``z1``.

    Video i uses noise seed ``eps_seed + i``.
    """
    if count < 2:
        raise ValueError("diversity_std: count must be >= 2")
    z1 = np.asarray(z1, dtype=np.float32).reshape(-1)
    d = z1.shape[0]
    eps = np.stack([draw_eps(eps_seed + i, n - 1, d) for i in range(count)])
    traj = models.gm(np.repeat(z1[None], count, axis=0), eps)
    codes = traj.codes.data  # count×n×d
    frames = models.gen.synthesize(Tensor(codes.reshape(count * n, d))).data
    frames = frames.reshape((count, n) + frames.shape[1:]).astype(np.float64)
    return frames.std(axis=0).mean(axis=(1, 2, 3))


def model_embedder(embedder) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a contrastive embedder as a frames -> embeddings function for ACD."""

    def embed(frames: np.ndarray) -> np.ndarray:
        return embedder(Tensor(np.asarray(frames, dtype=np.float32))).data

    return embed


def trunk_features(di) -> FeatureFn:
    """Perceptual features for inversion: the image discriminator's block activations."""

    def features(img: Tensor) -> list[Tensor]:
        with di.frozen():
            feats, _ = di.trunk(img)
        return feats

    return features
