"""Adversarial, contrastive and feature-matching losses."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentmotion import tensor as T
from latentmotion.discriminators import ImageDiscriminator, VideoDiscConfig, VideoDiscriminator
from latentmotion.gradcheck import grad_check
from latentmotion.losses import (
    AdversarialTerm,
    adversarial_loss,
    logit_accuracy,
    loss_contrastive,
    loss_feature_matching,
    loss_image_adversarial,
    loss_video_adversarial,
    video_adversarial_terms,
)
from latentmotion.tensor import Tensor


def log_sigmoid(x):
    return -math.log1p(math.exp(-x)) if x > 0 else x - math.log1p(math.exp(x))


def contrastive_oracle(a, b, bank, tau, variant):
    """Exhaustive double sum over anchors and candidate columns."""
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    b = b / np.linalg.norm(b, axis=1, keepdims=True)
    n = len(a)
    views = {(i, 0): a[i] for i in range(n)} | {(i, 1): b[i] for i in range(n)}
    total = 0.0
    for (i, alpha), anchor in views.items():
        pos = views[(i, 1 - alpha)]
        num = math.exp(float(anchor @ pos) / tau)
        den = 0.0
        for (j, beta), other in views.items():
            if variant == "literal" and j == i:
                continue
            if variant == "standard" and (j, beta) == (i, alpha):
                continue
            den += math.exp(float(anchor @ other) / tau)
        for neg in bank:
            den += math.exp(float(anchor @ neg) / tau)
        total += -math.log(num / den)
    return total


def unit(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestAdversarial:
    def test_zero_logits(self):
        z = Tensor(np.zeros(4))
        assert adversarial_loss(z, z, "discriminator").item() == pytest.approx(2 * math.log(2))
        assert adversarial_loss(None, z, "generator").item() == pytest.approx(math.log(2))
        assert adversarial_loss(None, z, "generator", "minimax").item() == pytest.approx(-math.log(2))

    def test_perfect_discriminator(self):
        real, fake = Tensor(np.full(3, 50.0)), Tensor(np.full(3, -50.0))
        assert adversarial_loss(real, fake, "discriminator").item() < 1e-20

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_scalar_formula(self, seed):
        r = np.random.default_rng(seed)
        real, fake = r.normal(0, 3, 5), r.normal(0, 3, 7)
        d = -(np.mean([log_sigmoid(x) for x in real]) + np.mean([log_sigmoid(-x) for x in fake]))
        g_ns = -np.mean([log_sigmoid(x) for x in fake])
        g_mm = np.mean([log_sigmoid(-x) for x in fake])
        assert adversarial_loss(Tensor(real), Tensor(fake), "discriminator").item() == pytest.approx(d, rel=1e-12)
        assert adversarial_loss(None, Tensor(fake), "generator").item() == pytest.approx(g_ns, rel=1e-12)
        assert adversarial_loss(None, Tensor(fake), "generator", "minimax").item() == pytest.approx(g_mm, rel=1e-12)

    def test_forms_share_gradient_direction(self):
        fake = Tensor(np.array([-2.0, 0.5]), requires_grad=True)
        adversarial_loss(None, fake, "generator").backward()
        ns = fake.grad.copy()
        fake.grad = None
        adversarial_loss(None, fake, "generator", "minimax").backward()
        assert np.all(np.sign(ns) == np.sign(fake.grad))
        # the non-saturating form pushes harder on confidently rejected fakes
        assert abs(ns[0]) > abs(fake.grad[0])

    def test_bad_arguments(self):
        z = Tensor(np.zeros(2))
        with pytest.raises(ValueError, match="side"):
            adversarial_loss(z, z, "critic")
        with pytest.raises(ValueError, match="form"):
            adversarial_loss(z, z, "generator", "wasserstein")
        with pytest.raises(ValueError, match="real"):
            adversarial_loss(None, z, "discriminator")

    def test_accuracy(self):
        assert logit_accuracy(Tensor(np.array([1.0, -1.0])), Tensor(np.array([-1.0, -2.0]))) == 0.75
        term = AdversarialTerm(Tensor(0.0), None, Tensor(np.array([-1.0, 1.0])))
        assert term.accuracy == 0.5


class TestVideoAdversarial:
    @pytest.fixture
    def dv(self):
        return VideoDiscriminator(6, VideoDiscConfig(channels=(4, 4, 8, 8, 1), strides=(2, 1, 1, 1, 1)), seed=0)

    def test_constant_discriminator(self, dv, rng):
        for p in dv.parameters():
            p.data = np.zeros_like(p.data)
        clips = rng.standard_normal((2, 8, 3, 16, 16)).astype(np.float32)
        term = video_adversarial_terms(clips, clips, dv, "discriminator")
        assert term.loss.item() == pytest.approx(2 * math.log(2), rel=1e-6)

    def test_matches_logit_formula(self, dv, rng):
        real = rng.standard_normal((2, 8, 3, 16, 16)).astype(np.float32)
        fake = rng.standard_normal((2, 8, 3, 16, 16)).astype(np.float32)
        term = video_adversarial_terms(real, fake, dv, "discriminator")
        want = -(np.mean([log_sigmoid(x) for x in term.real_logits.data])
                 + np.mean([log_sigmoid(-x) for x in term.fake_logits.data]))
        assert term.loss.item() == pytest.approx(want, rel=1e-5)

    def test_generator_side_skips_real(self, dv, rng):
        fake = rng.standard_normal((2, 8, 3, 16, 16)).astype(np.float32)
        assert video_adversarial_terms(None, fake, dv, "generator").real_logits is None
        assert loss_video_adversarial(None, fake, dv, "generator").shape == ()

    def test_shape_mismatch(self, dv, rng):
        with pytest.raises(ValueError, match="real clips"):
            video_adversarial_terms(np.zeros((2, 7, 3, 16, 16), np.float32), np.zeros((2, 8, 3, 16, 16), np.float32),
                                    dv, "discriminator")


class TestImageAdversarial:
    @pytest.fixture
    def di(self):
        return ImageDiscriminator(3, 8, (2, 4), seed=0, dtype=np.float64)

    def test_same_frames_and_zero_logits(self, di, rng):
        for p in di.parameters():
            p.data = np.zeros_like(p.data)
        x = rng.standard_normal((3, 3, 8, 8))
        assert loss_image_adversarial(x, x, di, "discriminator").item() == pytest.approx(2 * math.log(2))

    def test_closed_form(self, di, rng):
        f1, ft = rng.standard_normal((2, 3, 8, 8)), rng.standard_normal((4, 3, 8, 8))
        real, fake = di(Tensor(f1)).data, di(Tensor(ft)).data
        want = -(np.mean([log_sigmoid(x) for x in real]) + np.mean([log_sigmoid(-x) for x in fake]))
        assert loss_image_adversarial(f1, ft, di, "discriminator").item() == pytest.approx(want, rel=1e-10)

    def test_first_frame_is_detached(self, di, rng):
        f1 = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True)
        ft = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True)
        loss_image_adversarial(f1, ft, di, "discriminator").backward()
        assert f1.grad is None or not np.any(f1.grad)
        assert np.any(ft.grad)

    def test_first_index_rejected(self, di):
        x = np.zeros((1, 3, 8, 8))
        with pytest.raises(ValueError, match="frame 1"):
            loss_image_adversarial(x, x, di, "discriminator", t_index=[1])


class TestContrastive:
    def test_two_orthogonal_videos(self):
        e1, e2 = np.eye(2)
        emb = np.stack([e1, e2])
        loss = loss_contrastive(emb, emb, tau=0.07).item()
        assert loss == pytest.approx(4 * (math.log(2) - 1 / 0.07), rel=1e-9)
        assert loss == pytest.approx(-54.37, abs=0.01)

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_identical_embeddings(self, n):
        emb = np.tile([[0.6, 0.8]], (n, 1))
        assert loss_contrastive(emb, emb, tau=0.07).item() == pytest.approx(2 * n * math.log(2 * n - 2), rel=1e-9)

    def test_large_temperature_limit(self, rng):
        n = 4
        a, b = unit(rng, n, 5), unit(rng, n, 5)
        assert loss_contrastive(a, b, tau=1e6).item() == pytest.approx(2 * n * math.log(2 * n - 2), rel=1e-5)

    @pytest.mark.parametrize("n,k,variant", [c for c in itertools.product([1, 2, 3, 4], [0, 3], ["literal", "standard"])
                                             if c[0] > 1 or c[1] > 0])
    def test_matches_exhaustive_oracle(self, n, k, variant):
        r = np.random.default_rng(10 * n + k)
        a, b, bank = r.standard_normal((n, 6)), r.standard_normal((n, 6)), unit(r, k, 6)
        got = loss_contrastive(a, b, bank if k else None, tau=0.2, variant=variant).item()
        assert got == pytest.approx(contrastive_oracle(a, b, bank, 0.2, variant), abs=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 100_000), st.integers(2, 4), st.floats(0.05, 2.0))
    def test_oracle_property(self, seed, n, tau):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal((n, 4)), r.standard_normal((n, 4))
        assert loss_contrastive(a, b, tau=tau).item() == pytest.approx(contrastive_oracle(a, b, [], tau, "literal"),
                                                                       rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient(self, seed):
        r = np.random.default_rng(seed)
        a = Tensor(r.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(r.standard_normal((3, 4)), requires_grad=True)
        bank = unit(r, 2, 4)
        assert grad_check(lambda: loss_contrastive(a, b, bank, tau=0.5), [a, b]) < 1e-5

    def test_needs_negatives(self):
        with pytest.raises(ValueError, match="N >= 2"):
            loss_contrastive(np.ones((1, 3)), np.ones((1, 3)))

    def test_bad_arguments(self):
        e = np.eye(2)
        with pytest.raises(ValueError, match="tau"):
            loss_contrastive(e, e, tau=0)
        with pytest.raises(ValueError, match="variant"):
            loss_contrastive(e, e, variant="simclr")
        with pytest.raises(ValueError, match="bank shape"):
            loss_contrastive(e, e, np.ones((2, 3)) / np.sqrt(3))
        with pytest.raises(ValueError, match="embeddings"):
            loss_contrastive(e, np.eye(3))


class TestFeatureMatching:
    def test_identical(self, rng):
        feats = [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 5))]
        assert loss_feature_matching(feats, feats).item() == pytest.approx(1.0)

    def test_orthogonal(self):
        a = [np.array([[1.0, 0.0]]), np.array([[0.0, 2.0, 0.0]])]
        b = [np.array([[0.0, 3.0]]), np.array([[1.0, 0.0, 0.0]])]
        assert loss_feature_matching(a, b).item() == pytest.approx(0.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_per_layer_cosine_oracle(self, seed):
        r = np.random.default_rng(seed)
        shapes = [(3, 2, 4, 4), (3, 8), (3, 4, 2, 2)]
        a = [r.standard_normal(s) for s in shapes]
        b = [r.standard_normal(s) for s in shapes]
        layer = []
        for x, y in zip(a, b):
            x, y = x.reshape(3, -1), y.reshape(3, -1)
            layer.append(np.mean([xi @ yi / np.linalg.norm(xi) / np.linalg.norm(yi) for xi, yi in zip(x, y)]))
        assert loss_feature_matching(a, b).item() == pytest.approx(np.mean(layer), rel=1e-10)

    def test_errors(self):
        with pytest.raises(ValueError, match="non-empty"):
            loss_feature_matching([], [])
        with pytest.raises(ValueError, match="layer shapes"):
            loss_feature_matching([np.ones((1, 2))], [np.ones((1, 3))])

    def test_gradient(self, rng):
        a = Tensor(rng.standard_normal((2, 6)), requires_grad=True)
        b = Tensor(rng.standard_normal((2, 6)), requires_grad=True)
        assert grad_check(lambda: loss_feature_matching([a], [b]), [a, b]) < 1e-5
