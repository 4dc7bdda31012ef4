import math

import numpy as np
import pytest

from fusecue.errors import DivergenceError, EmptyDataset, InvalidShape, InvalidSpec
from fusecue.fusion import FusionBlockParams, FusionVariant
from fusecue.nn import (
    RGB_ONLY,
    AdamConfig,
    AdamState,
    Detector,
    FrameSet,
    InputAssembly,
    TrainConfig,
    adam_step,
    assemble_input,
    assembled_param_delta,
    bce_loss,
    latest_checkpoint,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from fusecue.nn.layers import BatchNorm2d, Conv2d, MaxPool2
from fusecue.tensor import CueKind, ImageTensor
from fusecue.wavelet import wdf

SMALL = (4, 4, 6, 6)


def rel_err(a, b, floor=1e-7):
    return abs(a - b) / max(abs(a), abs(b), floor)


class TestAssembly:
    def test_parse_round_trip(self):
        for text in ("rgb", "concat:wdf", "concat:lbp", "concat:phase", "fused:lfws", "fused:lfwl"):
            assert str(InputAssembly.parse(text)) == text
        for bad in ("concat", "fused:x", "rgbx", "concat:lfws"):
            with pytest.raises(InvalidSpec):
                InputAssembly.parse(bad)

    def test_channel_counts(self):
        assert InputAssembly.parse("rgb").in_channels == 3
        assert InputAssembly.parse("concat:phase").in_channels == 4
        assert InputAssembly.parse("fused:lfwl").in_channels == 4

    def test_assemble_examples(self, rng):
        rgb = ImageTensor(rng.uniform(-1, 1, (3, 8, 8)))
        w = wdf(rng.random((1, 8, 8)))
        cues = {CueKind.WDF: w, CueKind.PHASE: ImageTensor(rng.uniform(-0.1, 0.1, (1, 8, 8)))}
        assert assemble_input(rgb, cues, RGB_ONLY) == rgb
        cat = assemble_input(rgb, cues, InputAssembly.parse("concat:wdf"))
        assert cat.channels == 4 and np.array_equal(cat.data[3], w.data[0])
        fused = assemble_input(rgb, cues, InputAssembly.parse("fused:lfws"), FusionBlockParams.identity((1.0, 0.0)))
        # the block's ReLU keeps only the non-negative part of the WDF map
        assert np.array_equal(fused.data[3], np.maximum(w.data[0], 0))
        assert np.array_equal(fused.data[:3], rgb.data)

    def test_fused_needs_block(self, rng):
        with pytest.raises(InvalidSpec):
            assemble_input(np.zeros((3, 4, 4)), {}, InputAssembly.parse("fused:lfws"))

    def test_cue_shape_must_match(self):
        with pytest.raises(InvalidShape):
            assemble_input(np.zeros((3, 4, 4)), {CueKind.WDF: np.zeros((1, 4, 5))}, InputAssembly.parse("concat:wdf"))


class TestAccounting:
    def test_default_backbone_delta(self):
        delta = assembled_param_delta(widths=(16, 32, 64, 64))
        assert delta == {"backbone.stage0.conv.weight": 144, "fusion.w": 2, "fusion.gamma": 1, "fusion.beta": 1}

    def test_width_32_delta_totals_292(self):
        delta = assembled_param_delta()
        assert delta["backbone.stage0.conv.weight"] == 288
        assert sum(delta.values()) == 292

    def test_frozen_block_adds_no_trainables(self):
        m = Detector(InputAssembly.parse("fused:lfws"), widths=SMALL)
        n = m.count_trainable()
        m.freeze_fusion()
        assert m.count_trainable() == n - 4


class TestLayers:
    def test_maxpool_ceil_mode(self):
        x = np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3)
        assert MaxPool2().forward(x).tolist() == [[[[4.0, 5.0], [7.0, 8.0]]]]

    def test_conv_matches_direct_loop(self, rng):
        conv = Conv2d(2, 3, 3, rng=rng, dtype=np.float64)
        x = rng.standard_normal((2, 2, 5, 4))
        y = conv.forward(x)
        p = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        ref = np.zeros_like(y)
        for n in range(2):
            for o in range(3):
                for i in range(5):
                    for j in range(4):
                        ref[n, o, i, j] = np.sum(conv.weight.value[o] * p[n, :, i : i + 3, j : j + 3])
        np.testing.assert_allclose(y, ref, atol=1e-12)

    def test_batchnorm_running_stats(self, rng):
        bn = BatchNorm2d(2, dtype=np.float64)
        x = rng.standard_normal((4, 2, 3, 3))
        bn.forward(x, train=True)
        n = 4 * 9
        np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))
        np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)) * n / (n - 1))


@pytest.mark.parametrize("assembly", ["rgb", "concat:lbp", "fused:lfws"])
def test_full_model_gradient_check(rng, assembly):
    m = Detector(InputAssembly.parse(assembly), widths=(3, 4, 4, 5), seed=3, dtype=np.float64)
    rgb = rng.uniform(-1, 1, (3, 3, 8, 8))
    cues = rng.uniform(-1, 1, (3, 3, 8, 8))
    labels = np.array([0, 1, 1])

    def loss():
        return bce_loss(m.forward(rgb, cues, train=True), labels)[0]

    m.zero_grad()
    _, d = bce_loss(m.forward(rgb, cues, train=True), labels)
    m.backward(d)
    h = 1e-5
    worst = 0.0
    for name, p in m.named_params().items():
        flat, grad = p.value.reshape(-1), p.grad.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss()
            flat[i] = old - h
            down = loss()
            flat[i] = old
            # some BN shifts have exactly-zero gradients; the floor absorbs rounding noise
            worst = max(worst, rel_err(grad[i], (up - down) / (2 * h), floor=1e-6))
    assert worst < 1e-4


class TestLoss:
    def test_examples(self):
        assert bce_loss([0.0], [1])[0] == pytest.approx(math.log(2), abs=1e-12)
        assert bce_loss([800.0], [1])[0] == 0.0
        assert bce_loss([-800.0], [1])[0] == pytest.approx(800.0)

    def test_gradient(self, rng):
        x = rng.standard_normal(7)
        y = rng.integers(0, 2, 7)
        _, g = bce_loss(x, y)
        h = 1e-6
        for i in range(7):
            e = np.zeros(7)
            e[i] = h
            num = (bce_loss(x + e, y)[0] - bce_loss(x - e, y)[0]) / (2 * h)
            assert rel_err(g[i], num) < 1e-6

    def test_non_negative(self, rng):
        assert bce_loss(rng.standard_normal(50) * 30, rng.integers(0, 2, 50))[0] >= 0


class TestAdam:
    def test_first_step_is_lr(self):
        p = {"x": np.array([0.5])}
        adam_step(p, {"x": np.array([1.0])}, AdamState(), AdamConfig(weight_decay=0.0))
        assert p["x"][0] == pytest.approx(0.5 - 2e-4, abs=1e-11)

    def test_zero_gradient_no_decay_is_noop(self):
        p = {"x": np.array([0.5, -2.0])}
        adam_step(p, {"x": np.zeros(2)}, AdamState(), AdamConfig(weight_decay=0.0))
        assert p["x"].tolist() == [0.5, -2.0]

    def test_matches_scalar_trace(self):
        cfg = AdamConfig(lr=0.01, weight_decay=0.1)
        p = {"x": np.array([1.0])}
        st = AdamState()
        x, m, v = 1.0, 0.0, 0.0
        for t, g in enumerate([0.3, -0.7, 0.2], start=1):
            adam_step(p, {"x": np.array([g])}, st, cfg)
            g = g + 0.1 * x
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            x -= 0.01 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
            assert p["x"][0] == pytest.approx(x, abs=1e-12)

    def test_amsgrad_keeps_max(self):
        st = AdamState()
        p = {"x": np.array([0.0])}
        cfg = AdamConfig(amsgrad=True, weight_decay=0.0)
        adam_step(p, {"x": np.array([10.0])}, st, cfg)
        adam_step(p, {"x": np.array([0.0])}, st, cfg)
        assert st.vmax["x"][0] > st.v["x"][0]

    def test_config_validation(self):
        with pytest.raises(InvalidSpec):
            AdamConfig(lr=0)


def toy_frames(rng, n=12, size=8):
    frames = rng.random((n, 3, size, size)).astype(np.float32)
    labels = np.arange(n) % 2
    frames[labels == 1, :, 2:6, 2:6] *= 0.3
    return FrameSet(frames, labels, [f"v{i // 2}" for i in range(n)])


class TestTraining:
    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            train(Detector(widths=SMALL), FrameSet(np.zeros((0, 3, 8, 8)), [], []))

    def test_divergence_reports_step(self, rng):
        m = Detector(widths=SMALL)
        m.backbone.layers[-1][1].bias.value[...] = np.nan
        with pytest.raises(DivergenceError) as info:
            train(m, toy_frames(rng), TrainConfig(epochs=1, batch=4))
        assert info.value.step == 1

    def test_loss_decreases_and_checkpoints(self, rng, tmp_path):
        m = Detector(InputAssembly.parse("fused:lfws"), widths=SMALL, seed=5)
        data = toy_frames(rng, 16)
        cfg = TrainConfig(epochs=4, batch=8, seed=5, adam=AdamConfig(lr=5e-3), checkpoint_dir=tmp_path)
        hist = train(m, data, cfg)
        assert hist["loss"][-1] < hist["loss"][0]
        assert [p.name for p in hist["checkpoints"]] == [f"epoch_{e:03d}" for e in range(1, 5)]
        assert latest_checkpoint(tmp_path).name == "epoch_004"
        m2, adam, meta = load_checkpoint(tmp_path / "epoch_004")
        assert meta["epoch"] == 4 and adam.step == hist["adam"].step
        assert np.array_equal(predict(m2, data), predict(m, data))
        scores = predict(m, data)
        assert np.all((scores > 0) & (scores < 1))

    def test_same_seed_same_checkpoint_bytes(self, rng, tmp_path):
        data = toy_frames(rng)
        for run in ("a", "b"):
            m = Detector(InputAssembly.parse("concat:phase"), widths=SMALL, seed=1024)
            train(m, data, TrainConfig(epochs=1, batch=4, checkpoint_dir=tmp_path / run))
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert files
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_augmented_training_is_deterministic(self, rng):
        from fusecue.augment import AugmentConfig

        data = toy_frames(rng)
        outs = []
        for _ in range(2):
            m = Detector(widths=SMALL, seed=2)
            train(m, data, TrainConfig(epochs=1, batch=6, augment=AugmentConfig()))
            outs.append(predict(m, data))
        assert np.array_equal(*outs)

    def test_frozen_block_is_untouched_by_training(self, rng):
        block = FusionBlockParams(w=[0.3, -0.2], running_var=0.5, frozen=True, variant=FusionVariant.LFWS)
        m = Detector(InputAssembly.parse("fused:lfws"), widths=SMALL, block=block)
        train(m, toy_frames(rng), TrainConfig(epochs=1, batch=4))
        after = m.fusion.block()
        assert after.w.tolist() == pytest.approx([0.3, -0.2]) and after.running_var == 0.5

    def test_checkpoint_round_trip_without_optimizer(self, tmp_path):
        m = Detector(InputAssembly.parse("concat:wdf"), widths=SMALL, seed=9)
        save_checkpoint(tmp_path, m)
        m2, adam, _ = load_checkpoint(tmp_path)
        assert adam is None
        for k, v in m.state().items():
            assert np.array_equal(v, m2.state()[k])
