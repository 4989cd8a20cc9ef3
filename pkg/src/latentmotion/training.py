"""Alternating optimisation of the motion generator against D_V and D_I.

Per step: (1) D_V update, (2) D_I update with the weighted contrastive term,
(3) momentum update of the embedder copy and memory-bank enqueue,
(4) motion-generator update. Randomness for step ``s`` comes from streams
seeded by ``(seed, s)``, so a resumed run replays a continuous one exactly.
"""

from __future__ import annotations

import contextlib
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .augment import AugPolicy, augment
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import ClipDataset
from .discriminators import (
    ContrastiveEmbedder,
    ImageDiscriminator,
    MemoryBank,
    VideoDiscConfig,
    VideoDiscriminator,
    make_ema_copy,
    momentum_update,
)
from .generator import ImageGenerator
from .latent import PcaBasis
from .losses import (
    adversarial_loss,
    loss_contrastive,
    loss_feature_matching,
    loss_image_adversarial,
    video_adversarial_terms,
)
from .motion import MotionGenerator, Trajectory, mutual_info_loss
from .optim import Adam
from .tensor import NonFiniteError, Tensor

LOG_COLUMNS = ("step", "loss_dv", "loss_di", "loss_contr", "loss_m", "loss_f", "acc_dv")
DOMAIN_MODES = ("in", "cross")
DEFAULT_LAMBDA = {"in": 0.5, "cross": 0.2}


@dataclass(frozen=True)
class LossWeights:
    lambda_m: float = 1.0
    lambda_contr: float = 1.0
    lambda_f: float = 1.0
    tau: float = 0.07

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("loss weights: tau must be > 0")
        if min(self.lambda_m, self.lambda_contr, self.lambda_f) < 0:
            raise ValueError("loss weights: weights must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    n_frames: int = 8
    batch: int = 8
    lr: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.999)
    seed: int = 0
    domain_mode: str = "in"
    lam: float | None = None  # None: 0.5 in-domain, 0.2 cross-domain
    weights: LossWeights = LossWeights()
    use_lm: bool = True
    use_lcontr: bool = True
    use_di: bool = True
    use_dv: bool = True
    residual: bool = True
    detach_steps: bool = False
    gen_form: str = "nonsat"
    contrastive_variant: str = "literal"
    mapper_hidden: int | None = None
    dv: VideoDiscConfig = VideoDiscConfig()
    di_channels: tuple[int, ...] = (8, 16, 32, 64)
    proj_dim: int = 32
    bank_size: int = 512
    m_ema: float = 0.999
    aug: AugPolicy = AugPolicy()

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("train config: n_frames must be >= 2")
        if self.batch < 1:
            raise ValueError("train config: batch must be >= 1")
        if self.lr <= 0:
            raise ValueError("train config: lr must be > 0")
        if self.domain_mode not in DOMAIN_MODES:
            raise ValueError(f"train config: unknown domain mode {self.domain_mode!r}")
        if self.contrastive_enabled and self.batch < 2:
            raise ValueError("train config: the contrastive term needs batch >= 2")
        if self.lam is not None and self.lam < 0:
            raise ValueError("train config: lam must be >= 0")
        if not 0 <= self.m_ema < 1:
            raise ValueError("train config: m_ema must lie in [0, 1)")

    @property
    def step_scale(self) -> float:
        return DEFAULT_LAMBDA[self.domain_mode] if self.lam is None else self.lam

    @property
    def contrastive_enabled(self) -> bool:
        # the embedder shares D_I's trunk, so the term disappears with D_I
        return self.use_lcontr and self.use_di

    @property
    def enabled_terms(self) -> tuple[str, ...]:
        terms = []
        if self.use_dv:
            terms += ["loss_dv", "acc_dv", "loss_gv"]
        if self.use_di:
            terms += ["loss_di", "loss_gi", "loss_f"]
        if self.contrastive_enabled:
            terms.append("loss_contr")
        if self.use_lm:
            terms.append("loss_m")
        if self.use_dv or self.use_di or self.use_lm:
            terms.append("loss_g")
        return tuple(terms)


class Models:
    """Every network of a run plus its optimisers."""

    def __init__(self, gen: ImageGenerator, basis: PcaBasis, cfg: TrainConfig, dtype=np.float32):
        self.gen = gen
        self.cfg = cfg
        self.basis = basis
        c, h, w = gen.spec.image_shape
        if h != w:
            raise ValueError("models: square images required")
        seed = cfg.seed
        self.gm = MotionGenerator(basis, cfg.step_scale, cfg.mapper_hidden, seed, dtype,
                                  residual=cfg.residual, detach_steps=cfg.detach_steps)
        in_ch = 2 * c if cfg.domain_mode == "in" else c
        self.dv = VideoDiscriminator(in_ch, cfg.dv, seed, dtype)
        t = cfg.n_frames - 1 if cfg.domain_mode == "in" else cfg.n_frames
        self.dv.check_input((t, h, w))
        self.di = ImageDiscriminator(c, h, cfg.di_channels, seed, dtype)
        self.embedder = ContrastiveEmbedder(self.di, cfg.proj_dim, seed, dtype)
        self.ema = make_ema_copy(self.embedder)
        self.bank = MemoryBank(cfg.bank_size, cfg.proj_dim)
        self.opt_gm = Adam(self.gm.parameters(), cfg.lr, cfg.betas)
        self.opt_dv = Adam(self.dv.parameters(), cfg.lr, cfg.betas)
        self.opt_di = Adam(self.di.parameters() + self.embedder.parameters(), cfg.lr, cfg.betas)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        out.update(self.basis.tensors("basis."))
        out.update({f"generator.{k}": v for k, v in self.gen.state_dict().items()})
        for prefix, module in (("gm.", self.gm), ("dv.", self.dv), ("di.", self.di), ("proj.", self.embedder)):
            out.update({prefix + k: v for k, v in module.state_dict().items()})
        out.update({f"ema.trunk.{k}": v for k, v in self.ema.trunk.state_dict().items()})
        out.update({f"ema.proj.{k}": v for k, v in self.ema.state_dict().items()})
        out.update(self.bank.tensors("bank."))
        for name, opt in (("gm", self.opt_gm), ("dv", self.opt_dv), ("di", self.opt_di)):
            out.update(opt.state_tensors(f"opt.{name}"))
        return out

    def load_state_tensors(self, arrays: dict[str, np.ndarray]) -> None:
        self.gm.load_state_dict(arrays, "gm.")
        self.dv.load_state_dict(arrays, "dv.")
        self.di.load_state_dict(arrays, "di.")
        self.embedder.load_state_dict(arrays, "proj.")
        self.ema.trunk.load_state_dict(arrays, "ema.trunk.")
        self.ema.load_state_dict(arrays, "ema.proj.")
        for p in self.ema.all_parameters():
            p.requires_grad = False
        self.bank.load(arrays, "bank.")
        for name, opt in (("gm", self.opt_gm), ("dv", self.opt_dv), ("di", self.opt_di)):
            if f"opt.{name}.step" in arrays:
                opt.load_state_tensors(f"opt.{name}", arrays)


@dataclass
class LossReport:
    step: int
    values: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def row(self) -> list[str]:
        cells = [str(self.step)]
        for col in LOG_COLUMNS[1:]:
            v = self.values.get(col)
            cells.append("" if v is None else repr(float(v)))
        return cells


@contextlib.contextmanager
def _component(name: str):
    try:
        yield
    except NonFiniteError as exc:
        raise NonFiniteError(f"{name}: {exc}") from exc


def _scalar(name: str, loss: Tensor) -> float:
    value = float(loss.item())
    if not np.isfinite(value):
        raise NonFiniteError(f"{name}: non-finite loss value")
    return value


def step_rng(seed: int, step: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, stream])


def rollout(models: Models, z1: np.ndarray, eps: np.ndarray) -> tuple[Trajectory, Tensor]:
    """Trajectory and N×n×c×h×w frames for a batch of first codes and noise sequences."""
    traj = models.gm(z1, eps)
    b, n, d = traj.codes.shape
    c, h, w = models.gen.spec.image_shape
    frames = models.gen.synthesize(T.reshape(traj.codes, (b * n, d)))
    return traj, T.reshape(frames, (b, n, c, h, w))


def contrastive_views(real: np.ndarray, fake: np.ndarray, cfg: TrainConfig, seed: int, step: int):
    """Two augmented views per video.

    In-domain: two distinct frames of each real clip. Cross-domain: one
    generated frame per video, augmented twice. Frame indices are uniform.
    """
    rng = step_rng(seed, step, 0xC0)
    src = real if cfg.domain_mode == "in" else fake
    b, n = src.shape[:2]
    views_a, views_b = [], []
    for i in range(b):
        if cfg.domain_mode == "in":
            ta, tb = rng.choice(n, size=2, replace=False)
        else:
            ta = tb = rng.integers(n)
        ra = np.random.default_rng([seed, step, 0xC1, i])
        rb = np.random.default_rng([seed, step, 0xC2, i])
        views_a.append(augment(src[i, ta], ra, cfg.aug))
        views_b.append(augment(src[i, tb], rb, cfg.aug))
    return np.stack(views_a).astype(np.float32), np.stack(views_b).astype(np.float32)


def _first_vs_later(feat: Tensor, b: int, n: int) -> tuple[Tensor, Tensor]:
    """Split (b·n)×... features into frame-1 copies and frames 2..n, both (b·(n-1))×F."""
    r = T.reshape(feat, (b, n, -1))
    first = r[:, 0:1] * np.ones((1, n - 1, 1), dtype=feat.dtype)
    rest = r[:, 1:]
    return T.reshape(first, (b * (n - 1), -1)), T.reshape(rest, (b * (n - 1), -1))


def train_step(real: np.ndarray, models: Models, cfg: TrainConfig, step: int) -> LossReport:
    """One alternating update on a batch of real clips (N×n×c×h×w)."""
    real = np.asarray(real, dtype=np.float32)
    b, n = real.shape[:2]
    if n != cfg.n_frames:
        raise ValueError(f"train_step: clips have {n} frames, config expects {cfg.n_frames}")
    gen, gm = models.gen, models.gm
    c, h, w = gen.spec.image_shape
    rng = step_rng(cfg.seed, step, 0xA1)
    z1 = gen.sample_latent(rng, b)
    eps = rng.standard_normal((b, n - 1, gen.spec.latent_dim)).astype(np.float32)
    with _component("generator rollout"):
        traj, frames = rollout(models, z1, eps)
    fake = frames.detach()
    report = LossReport(step)
    vals = report.values

    if cfg.use_dv:
        with _component("loss_dv"):
            models.opt_dv.zero_grad()
            term = video_adversarial_terms(real, fake, models.dv, "discriminator", cfg.domain_mode)
            vals["loss_dv"] = _scalar("loss_dv", term.loss)
            vals["acc_dv"] = term.accuracy
            term.loss.backward()
            models.opt_dv.step()

    if cfg.use_di:
        views = None
        with _component("loss_di"):
            models.opt_di.zero_grad()
            later = T.reshape(fake[:, 1:], (b * (n - 1), c, h, w))
            loss_di = loss_image_adversarial(fake[:, 0], later, models.di, "discriminator")
            vals["loss_di"] = _scalar("loss_di", loss_di)
            total = loss_di
        if cfg.contrastive_enabled:
            with _component("loss_contr"):
                views = contrastive_views(real, fake.data, cfg, cfg.seed, step)
                emb_a, emb_b = models.embedder(views[0]), models.embedder(views[1])
                w_ = cfg.weights
                loss_c = loss_contrastive(emb_a, emb_b, models.bank.query(), w_.tau, cfg.contrastive_variant)
                vals["loss_contr"] = _scalar("loss_contr", loss_c)
                total = total + loss_c * w_.lambda_contr
        with _component("loss_di"):
            total.backward()
            models.opt_di.step()
        if views is not None:
            momentum_update(models.embedder.all_parameters(), models.ema.all_parameters(), cfg.m_ema)
            models.bank.enqueue(models.ema(views[1]).data)

    terms = []
    with models.dv.frozen(), models.di.frozen(), models.embedder.frozen(), _component("generator update"):
        if cfg.use_dv:
            g_v = video_adversarial_terms(None, frames, models.dv, "generator", cfg.domain_mode, cfg.gen_form).loss
            vals["loss_gv"] = _scalar("loss_gv", g_v)
            terms.append(g_v)
        if cfg.use_di:
            feats, pooled = models.di.trunk(T.reshape(frames, (b * n, c, h, w)))
            logits = T.reshape(models.di.head(pooled), (b, n))
            g_i = adversarial_loss(None, logits[:, 1:], "generator", cfg.gen_form)
            vals["loss_gi"] = _scalar("loss_gi", g_i)
            pairs = [_first_vs_later(f, b, n) for f in feats]
            l_f = loss_feature_matching([p[0] for p in pairs], [p[1] for p in pairs])
            vals["loss_f"] = _scalar("loss_f", l_f)
            terms += [g_i, l_f * (-cfg.weights.lambda_f)]
        if cfg.use_lm:
            l_m = mutual_info_loss(traj.hidden, traj.eps, gm.mapper)
            vals["loss_m"] = _scalar("loss_m", l_m)
            terms.append(l_m * (-cfg.weights.lambda_m))
        if terms:
            total = terms[0]
            for t in terms[1:]:
                total = total + t
            vals["loss_g"] = _scalar("loss_g", total)
            models.opt_gm.zero_grad()
            total.backward()
            models.opt_gm.step()
    return report


class Trainer:
    """Runs ``train_step`` over a dataset with CSV logging and checkpointing."""

    def __init__(self, models: Models, dataset: ClipDataset, config_hash: str = "", config_text: str = ""):
        if dataset.n_frames != models.cfg.n_frames:
            raise ValueError(f"trainer: dataset clips have {dataset.n_frames} frames, need {models.cfg.n_frames}")
        if dataset.frame_shape != models.gen.spec.image_shape:
            raise ValueError(f"trainer: dataset frames {dataset.frame_shape} != generator {models.gen.spec.image_shape}")
        self.models = models
        self.dataset = dataset
        self.config_hash = config_hash
        self.config_text = config_text
        self.step = 0
        self.history: list[LossReport] = []

    @property
    def cfg(self) -> TrainConfig:
        return self.models.cfg

    def batch(self, step: int) -> np.ndarray:
        return self.dataset.sample_batch(step_rng(self.cfg.seed, step, 0xDA), self.cfg.batch)

    def run(self, steps: int, log_path=None, checkpoint_path=None, checkpoint_every: int = 0,
            callback: Callable[[LossReport], None] | None = None) -> list[LossReport]:
        writer_fh = None
        if log_path is not None:
            log_path = Path(log_path)
            fresh = not log_path.exists() or log_path.stat().st_size == 0
            writer_fh = open(log_path, "a", newline="")
            writer = csv.writer(writer_fh, lineterminator="\n")
            if fresh:
                writer.writerow(LOG_COLUMNS)
        try:
            reports = []
            for _ in range(steps):
                step = self.step + 1
                rep = train_step(self.batch(step), self.models, self.cfg, step)
                self.step = step
                reports.append(rep)
                self.history.append(rep)
                if writer_fh is not None:
                    writer.writerow(rep.row())
                    writer_fh.flush()
                if callback is not None:
                    callback(rep)
                if checkpoint_path is not None and checkpoint_every and step % checkpoint_every == 0:
                    self.save(checkpoint_path)
            if checkpoint_path is not None:
                self.save(checkpoint_path)
            return reports
        finally:
            if writer_fh is not None:
                writer_fh.close()

    def checkpoint(self) -> Checkpoint:
        tensors = self.models.state_tensors()
        if self.config_text:
            tensors["meta.config"] = encode_text(self.config_text)
        return Checkpoint(tensors, self.config_hash, self.step)

    def save(self, path) -> None:
        save_checkpoint(self.checkpoint(), path)

    def resume(self, path) -> None:
        ck = load_checkpoint(path)
        if self.config_hash and ck.config_hash and ck.config_hash != self.config_hash:
            raise ValueError("resume: checkpoint was written under a different config")
        self.models.load_state_tensors(ck.tensors)
        self.step = ck.step


def encode_text(text: str) -> np.ndarray:
    """Store UTF-8 text as a float64 byte vector (MCTN carries only float payloads)."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float64)


def decode_text(arr: np.ndarray) -> str:
    return np.asarray(arr).astype(np.uint8).tobytes().decode("utf-8")
