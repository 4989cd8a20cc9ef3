"""Adversarial, contrastive and feature-matching losses.

Every function returns a scalar to be *minimized*. Discriminator-side
adversarial losses are the negated log-likelihood objective, so logit 0
everywhere gives 2·log 2 and a perfect discriminator gives 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .discriminators import ImageDiscriminator, VideoDiscriminator, video_disc_input
from .tensor import Tensor

SIDES = ("discriminator", "generator")
FORMS = ("nonsat", "minimax")
CONTRASTIVE_VARIANTS = ("literal", "standard")


def _check_side(side: str, form: str) -> None:
    if side not in SIDES:
        raise ValueError(f"unknown side {side!r}")
    if form not in FORMS:
        raise ValueError(f"unknown generator form {form!r}")


def adversarial_loss(real_logits: Tensor | None, fake_logits: Tensor, side: str, form: str = "nonsat") -> Tensor:
    """Binary adversarial loss on logits.

    discriminator: -[mean log σ(real) + mean log(1 - σ(fake))]
    generator, nonsat: -mean log σ(fake)
    generator, minimax: mean log(1 - σ(fake))
    """
    _check_side(side, form)
    if side == "discriminator":
        if real_logits is None:
            raise ValueError("discriminator side needs real logits")
        return T.mean(T.softplus(-real_logits)) + T.mean(T.softplus(fake_logits))
    if form == "nonsat":
        return T.mean(T.softplus(-fake_logits))
    return -T.mean(T.softplus(fake_logits))


def logit_accuracy(real_logits: Tensor, fake_logits: Tensor) -> float:
    """Fraction of clips classified correctly (real > 0, fake < 0)."""
    hits = np.concatenate([real_logits.data > 0, fake_logits.data < 0])
    return float(hits.mean())


@dataclass
class AdversarialTerm:
    loss: Tensor
    real_logits: Tensor | None
    fake_logits: Tensor

    @property
    def accuracy(self) -> float:
        if self.real_logits is None:
            return float((self.fake_logits.data < 0).mean())
        return logit_accuracy(self.real_logits, self.fake_logits)


def video_adversarial_terms(real_clips, fake_clips, dv: VideoDiscriminator, side: str,
                            mode: str = "in", form: str = "nonsat") -> AdversarialTerm:
    """``*_clips`` are N×n×c×h×w frame batches; they are arranged for D_V per ``mode``."""
    _check_side(side, form)
    fake = T.as_tensor(fake_clips)
    fake_logits = dv.logits(video_disc_input(fake, mode))
    real_logits = None
    if side == "discriminator" or real_clips is not None:
        real = T.as_tensor(real_clips)
        if real.shape[1:] != fake.shape[1:]:
            raise ValueError(f"video adversarial: real clips {real.shape} vs fake {fake.shape}")
        real_logits = dv.logits(video_disc_input(real, mode))
    return AdversarialTerm(adversarial_loss(real_logits, fake_logits, side, form), real_logits, fake_logits)


def loss_video_adversarial(real_clips, fake_clips, dv: VideoDiscriminator, side: str,
                           mode: str = "in", form: str = "nonsat") -> Tensor:
    return video_adversarial_terms(real_clips, fake_clips, dv, side, mode, form).loss


def loss_image_adversarial(frame1, frame_t, di: ImageDiscriminator, side: str,
                           form: str = "nonsat", t_index=None) -> Tensor:
    """First generated frames are the real class, later frames the fake class.

    ``frame1`` (N×c×h×w) is detached, so gradients reach the motion generator
    only through ``frame_t`` (M×c×h×w). ``t_index`` optionally lists the
    1-based frame index of each row of ``frame_t``; index 1 is rejected.
    """
    _check_side(side, form)
    if t_index is not None and np.any(np.asarray(t_index) <= 1):
        raise ValueError("loss_image_adversarial: frame 1 cannot be a fake sample")
    frame_t = T.as_tensor(frame_t)
    fake_logits = di(frame_t)
    real_logits = None
    if side == "discriminator":
        real_logits = di(T.as_tensor(frame1).detach())
    return adversarial_loss(real_logits, fake_logits, side, form)


def _similarity_rows(z: Tensor, tau: float) -> Tensor:
    return (z @ z.T) * (1.0 / tau)


def loss_contrastive(emb_a, emb_b, negatives=None, tau: float = 0.07, variant: str = "literal") -> Tensor:
    """Contrastive cross-entropy over 2N anchors (two augmentations of N videos).

    For anchor (i, α) the positive is the other augmentation of video i.
    ``literal`` sums the denominator over both augmentations of every other
    video j ≠ i (the positive itself is left out); ``standard`` sums over every
    view except the anchor. Bank ``negatives`` (K×D unit vectors) join every
    denominator. The result is summed over all anchors.
    """
    if tau <= 0:
        raise ValueError("loss_contrastive: tau must be > 0")
    if variant not in CONTRASTIVE_VARIANTS:
        raise ValueError(f"unknown contrastive variant {variant!r}")
    a = T.normalize(T.as_tensor(emb_a), axis=-1)
    b = T.normalize(T.as_tensor(emb_b, like=a), axis=-1)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"loss_contrastive: embeddings {a.shape} vs {b.shape}")
    n = a.shape[0]
    bank = None if negatives is None else np.asarray(negatives.data if isinstance(negatives, Tensor) else negatives)
    has_bank = bank is not None and bank.size > 0
    if n < 2 and not has_bank:
        raise ValueError("loss_contrastive: need N >= 2 videos or a non-empty memory bank")
    z = T.concat([a, b], axis=0)  # rows 0..n-1 view a, n..2n-1 view b
    sims = _similarity_rows(z, tau)
    video = np.concatenate([np.arange(n), np.arange(n)])
    rows = np.arange(2 * n)
    pos_col = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    positives = sims[rows, pos_col]
    if variant == "literal":
        cols = [np.flatnonzero(video != video[p]) for p in rows]
    else:
        cols = [np.flatnonzero(rows != p) for p in rows]
    parts = []
    if cols[0].size:
        width = cols[0].size
        negs = sims[np.repeat(rows, width), np.concatenate(cols)]
        parts.append(T.reshape(negs, (2 * n, width)))
    if has_bank:
        if bank.ndim != 2 or bank.shape[1] != z.shape[1]:
            raise ValueError(f"loss_contrastive: bank shape {bank.shape} does not match dim {z.shape[1]}")
        parts.append((z @ bank.T.astype(z.dtype)) * (1.0 / tau))
    denom = T.logsumexp(T.concat(parts, axis=1) if len(parts) > 1 else parts[0], axis=1)
    return T.tsum(denom - positives)


def loss_feature_matching(feats_first: Sequence[Tensor], feats_t: Sequence[Tensor]) -> Tensor:
    """Mean over layers of the mean per-sample cosine similarity of flattened features."""
    if not feats_first or len(feats_first) != len(feats_t):
        raise ValueError("loss_feature_matching: need aligned, non-empty feature lists")
    per_layer = []
    for f1, ft in zip(feats_first, feats_t):
        f1, ft = T.as_tensor(f1), T.as_tensor(ft)
        if f1.shape != ft.shape:
            raise ValueError(f"loss_feature_matching: layer shapes {f1.shape} vs {ft.shape}")
        m = f1.shape[0]
        per_layer.append(T.mean(T.cosine_similarity(T.reshape(f1, (m, -1)), T.reshape(ft, (m, -1)), axis=-1)))
    return T.mean(T.stack(per_layer))
