import numpy as np
import pytest

from fusecue.augment import (
    AugmentConfig,
    apply_plan,
    augment,
    brightness_contrast,
    draw_plan,
    gaussian_blur,
    gaussian_kernel,
    hflip,
    jpeg_compress,
    rotate,
    scaled_qtable,
    LUMA_QTABLE,
)
from fusecue.data import SynthConfig, render_video
from fusecue.errors import InvalidSpec
from fusecue.tensor import ImageTensor


@pytest.fixture
def frame(rng):
    return ImageTensor(rng.random((3, 16, 20)))


def natural_frame():
    frames, _, _ = render_video(SynthConfig(size=64, noise=0.005), 3, False)
    return frames[0]


def first_seed(predicate):
    cfg = AugmentConfig()
    return next(s for s in range(10_000) if predicate(draw_plan(cfg, np.random.default_rng(s))))


def test_all_skipped_is_identity(frame):
    seed = first_seed(lambda plan: not plan)
    assert augment(frame, AugmentConfig(), seed) == frame


def test_everything_fires_and_stays_in_range(frame):
    seed = first_seed(lambda plan: len(plan) == 5)
    out = augment(frame, AugmentConfig(), seed)
    assert out.shape == frame.shape
    assert out.data.min() >= 0 and out.data.max() <= 1


def test_same_seed_same_output(frame):
    a = augment(frame, AugmentConfig(), 77)
    b = augment(frame, AugmentConfig(), np.random.default_rng(77))
    assert a == b


def test_plan_ranges():
    cfg = AugmentConfig()
    for s in range(200):
        plan = draw_plan(cfg, np.random.default_rng(s))
        assert set(plan) <= {"flip", "rotate", "blur", "color", "jpeg"}
        if "rotate" in plan:
            assert -10 <= plan["rotate"] <= 10
        if "blur" in plan:
            assert plan["blur"] in (3, 5, 7)
        if "color" in plan:
            assert all(-0.1 <= v <= 0.1 for v in plan["color"])
        if "jpeg" in plan:
            assert 40 <= plan["jpeg"] <= 100


def test_coin_rate_is_half():
    cfg = AugmentConfig()
    fired = sum(len(draw_plan(cfg, np.random.default_rng(s))) for s in range(2000))
    assert abs(fired / (2000 * 5) - 0.5) < 0.02


def test_flip_is_involution(frame):
    assert np.array_equal(hflip(hflip(frame.data)), frame.data)


def test_zero_rotation_is_identity(frame):
    np.testing.assert_allclose(rotate(frame.data.astype(float), 0.0), frame.data, atol=1e-12)


def test_rotation_keeps_dims_and_constants():
    x = np.full((3, 9, 13), 0.4)
    y = rotate(x, 7.5)
    assert y.shape == x.shape
    np.testing.assert_allclose(y, 0.4, atol=1e-12)


@pytest.mark.parametrize("k", [3, 5, 7])
def test_blur_kernel_and_mean(k, frame):
    kern = gaussian_kernel(k)
    assert abs(kern.sum() - 1) <= 1e-12 and len(kern) == k
    x = frame.data.astype(float)
    y = gaussian_blur(x, k)
    np.testing.assert_allclose(y.mean(axis=(1, 2)), x.mean(axis=(1, 2)), atol=1e-6)


def test_blur_sigma_convention():
    k = gaussian_kernel(5)
    sigma = 0.3 * ((5 - 1) / 2 - 1) + 0.8
    ref = np.exp(-((np.arange(5) - 2) ** 2) / (2 * sigma**2))
    np.testing.assert_allclose(k, ref / ref.sum(), rtol=1e-14)


def test_brightness_contrast_formula():
    x = np.array([[[0.2, 0.6]]])
    y = brightness_contrast(x, 0.1, -0.1)
    b = x * 1.1
    np.testing.assert_allclose(y, (b - b.mean()) * 0.9 + b.mean())


def test_jpeg_q100_is_gentle():
    x = natural_frame()
    y = jpeg_compress(x, 100)
    assert np.sqrt(np.mean((y - x) ** 2)) < 2 / 255


def test_jpeg_lower_quality_loses_more():
    x = natural_frame()
    err = [np.sqrt(np.mean((jpeg_compress(x, q) - x) ** 2)) for q in (95, 60, 10)]
    assert err[0] < err[1] < err[2]


def test_jpeg_odd_sizes(rng):
    x = rng.random((3, 11, 13))
    y = jpeg_compress(x, 75)
    assert y.shape == x.shape and y.min() >= 0 and y.max() <= 1


def test_qtable_scaling():
    assert np.all(scaled_qtable(LUMA_QTABLE, 100) == 1)
    assert np.array_equal(scaled_qtable(LUMA_QTABLE, 50), LUMA_QTABLE)


def test_config_validation():
    with pytest.raises(InvalidSpec):
        AugmentConfig(blur_kernels=(4,))
    with pytest.raises(InvalidSpec):
        AugmentConfig(jpeg_quality=(0, 100))
    with pytest.raises(InvalidSpec):
        AugmentConfig(p_each=1.5)
    cfg = AugmentConfig(p_each=0.25)
    assert AugmentConfig.from_dict(cfg.to_dict()) == cfg


def test_fixed_order(frame):
    plan = {"flip": True, "color": (0.05, 0.0)}
    direct = np.clip(brightness_contrast(hflip(frame.data.astype(float)), 0.05, 0.0), 0, 1)
    np.testing.assert_allclose(apply_plan(frame, plan).data, direct, atol=1e-7)
