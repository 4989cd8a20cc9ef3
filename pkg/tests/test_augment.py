"""Augmentation policy."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentmotion.augment import (
    IDENTITY,
    AugParams,
    AugPolicy,
    apply_params,
    augment,
    augment_batch,
    cutout_box,
    sample_params,
)


@pytest.fixture
def img(rng):
    # strictly positive so that exact zeros can only come from the cutout box
    return rng.uniform(0.1, 1.0, (3, 32, 32)).astype(np.float32)


class TestApply:
    def test_identity(self, img):
        np.testing.assert_array_equal(apply_params(img, IDENTITY), img)

    def test_cutout_area(self, img):
        out = apply_params(img, AugParams(cutout=0.25, cutout_y=0.3, cutout_x=0.9))
        assert np.count_nonzero(out[0] == 0) == int(0.0625 * 32 * 32)
        assert np.all((out == 0).sum(axis=0) % 3 == 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(4, 40), st.integers(4, 40), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_cutout_box_inside_image(self, h, w, frac, fy, fx):
        y0, x0, ch, cw = cutout_box(h, w, AugParams(cutout=frac, cutout_y=fy, cutout_x=fx))
        assert 0 <= y0 and y0 + ch <= h and 0 <= x0 and x0 + cw <= w

    def test_double_flip(self, img):
        flip = AugParams(flip=True)
        np.testing.assert_array_equal(apply_params(apply_params(img, flip), flip), img)
        np.testing.assert_array_equal(apply_params(img, flip), img[:, :, ::-1])

    def test_brightness_is_a_shift(self, img):
        np.testing.assert_allclose(apply_params(img, AugParams(brightness=0.3)), img + 0.3, rtol=1e-6)

    def test_colour_shift_hits_one_channel(self, img):
        out = apply_params(img, AugParams(color=-0.2, color_channel=1))
        np.testing.assert_allclose(out[1], img[1] - 0.2, rtol=1e-6)
        np.testing.assert_array_equal(out[[0, 2]], img[[0, 2]])

    def test_full_turn_is_identity(self, img):
        out = apply_params(img, AugParams(rotation=360.0))
        # border samples may round just outside the frame and take the fill value
        np.testing.assert_allclose(out[:, 1:-1, 1:-1], img[:, 1:-1, 1:-1], atol=1e-4)

    def test_quarter_turn_on_square(self, rng):
        x = rng.uniform(0.1, 1, (1, 9, 9))
        out = apply_params(x, AugParams(rotation=90.0))
        # exact up to the direction convention
        assert np.allclose(out[0], np.rot90(x[0], 1), atol=1e-9) or np.allclose(out[0], np.rot90(x[0], -1), atol=1e-9)

    def test_translation_moves_content(self):
        x = -np.ones((1, 20, 20))
        x[0, 10, 10] = 1.0
        out = apply_params(x, AugParams(tx=0.1))
        assert np.unravel_index(np.argmax(out[0]), (20, 20)) == (10, 12)

    def test_rejects_non_image(self):
        with pytest.raises(ValueError):
            apply_params(np.zeros((32, 32)), IDENTITY)


class TestSampling:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_parameters_within_policy(self, seed):
        pol = AugPolicy()
        p = sample_params(np.random.default_rng(seed), pol)
        assert -180 <= p.rotation <= 180
        assert -0.1 <= p.tx <= 0.1 and -0.1 <= p.ty <= 0.1
        assert 0.95 <= p.scale <= 1.05
        assert -0.5 <= p.brightness <= 0.5 and -0.5 <= p.color <= 0.5
        assert 0 <= p.cutout <= 0.25
        assert p.color_channel in (0, 1, 2)

    def test_flip_frequency(self):
        rng = np.random.default_rng(0)
        flips = [sample_params(rng, AugPolicy()).flip for _ in range(4000)]
        assert abs(np.mean(flips) - 0.5) < 0.03

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_shape_preserved(self, seed):
        x = np.random.default_rng(seed).uniform(-1, 1, (3, 16, 16)).astype(np.float32)
        out = augment(x, np.random.default_rng(seed), AugPolicy())
        assert out.shape == x.shape and out.dtype == x.dtype

    def test_degenerate_policy_is_identity(self, img, rng):
        pol = AugPolicy((0, 0), (0, 0), (1, 1), (0, 0), (0, 0), (0, 0), 0.0)
        np.testing.assert_array_equal(augment(img, rng, pol), img)

    def test_policy_validation(self):
        with pytest.raises(ValueError, match="reversed"):
            AugPolicy(rotation=(10.0, -10.0))
        with pytest.raises(ValueError):
            AugPolicy(flip_prob=1.5)
        with pytest.raises(ValueError):
            AugPolicy(cutout=(0.0, 1.5))

    def test_batch_streams_per_sample(self, rng):
        imgs = rng.uniform(-1, 1, (4, 3, 16, 16)).astype(np.float32)
        a = augment_batch(imgs, 7)
        np.testing.assert_array_equal(a, augment_batch(imgs, 7))
        # sample i depends only on (seed, i)
        np.testing.assert_array_equal(augment_batch(imgs[:2], 7), a[:2])
        assert not np.array_equal(augment_batch(imgs, 8), a)
