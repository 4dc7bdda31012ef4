import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusecue.errors import FormatError, FrozenViolation, InvalidShape, InvalidSpec
from fusecue.fusion import (
    FusionBlockParams,
    FusionVariant,
    backward,
    count_additional_params,
    dumps_frozen,
    export_frozen,
    forward,
    fuse_forward,
    import_frozen,
    param_breakdown,
)
from fusecue.tensor import CueChannel, CueKind

LFWS = FusionBlockParams.identity((0.18, -0.12), FusionVariant.LFWS)
LFWL = FusionBlockParams.identity((0.08, -0.32), FusionVariant.LFWL)


def cue(value, kind, shape=(4, 4)):
    return CueChannel(np.full((1,) + shape, value), kind=kind)


def test_lfws_example():
    y = fuse_forward(cue(1.0, CueKind.WDF), cue(1.0, CueKind.PHASE), LFWS)
    np.testing.assert_allclose(y.data, 0.06, atol=1e-7)


def test_lfwl_example_is_clamped():
    y = fuse_forward(cue(0.0, CueKind.WDF), cue(1.0, CueKind.LBP), LFWL)
    assert not y.data.any()


def test_projection_passes_non_negative_input(rng):
    a = rng.random((2, 5, 5))
    y = fuse_forward(a, rng.standard_normal((2, 5, 5)), FusionBlockParams.identity((1.0, 0.0)))
    assert np.array_equal(y, a)


def test_projection_clamps_negative_part(rng):
    a = rng.standard_normal((2, 5, 5))
    y = fuse_forward(a, rng.standard_normal((2, 5, 5)), FusionBlockParams.identity((1.0, 0.0)))
    assert np.array_equal(y, np.maximum(a, 0))


def test_variant_streams():
    assert FusionVariant.parse("lfws").streams == (CueKind.WDF, CueKind.PHASE)
    assert FusionVariant.parse("LFWL").streams == (CueKind.WDF, CueKind.LBP)
    with pytest.raises(InvalidSpec):
        FusionVariant.parse("lfwx")


def test_shape_mismatch():
    with pytest.raises(InvalidShape):
        fuse_forward(np.zeros((1, 4, 4)), np.zeros((1, 4, 5)), LFWS)


def test_mixer_must_have_two_weights():
    with pytest.raises(InvalidSpec):
        FusionBlockParams(w=[1.0, 2.0, 3.0])


def test_train_mode_updates_running_stats(rng):
    p = FusionBlockParams(w=[0.5, -0.25])
    a, b = rng.standard_normal((2, 3, 6, 6))
    z = 0.5 * a - 0.25 * b
    forward(a, b, p, train=True)
    n = z.size
    assert p.running_mean == pytest.approx(0.1 * z.mean(), rel=1e-12)
    assert p.running_var == pytest.approx(0.9 + 0.1 * z.var() * n / (n - 1), rel=1e-12)


def test_external_batch_stats(rng):
    p = FusionBlockParams(w=[1.0, 0.0], eps=0.0)
    a = rng.standard_normal((1, 4, 4))
    y, _ = forward(a, a, p, train=True, batch_stats=(0.0, 4.0))
    np.testing.assert_allclose(y, np.maximum(a / 2, 0))


def test_eval_is_independent_of_batch(rng):
    p = FusionBlockParams(w=[0.3, 0.7], running_mean=0.1, running_var=2.0)
    a, b = rng.standard_normal((2, 6, 5, 5))
    full, _ = forward(a, b, p)
    one, _ = forward(a[2:3], b[2:3], p)
    assert np.array_equal(full[2:3], one)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 2**31))
def test_pre_normalisation_homogeneity(alpha, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((2, 1, 4, 4))
    p = FusionBlockParams.identity((0.4, -1.3))
    p.running_mean, p.beta = 0.0, 0.0
    # with identity normalisation, pre-activation is the mixer output
    _, c1 = forward(alpha * a, alpha * b, p)
    _, c0 = forward(a, b, p)
    np.testing.assert_allclose(c1.pre, alpha * c0.pre, rtol=1e-12, atol=1e-12)


def rel_err(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.max(np.abs(x - y) / np.maximum(np.maximum(np.abs(x), np.abs(y)), 1e-8)))


@pytest.mark.parametrize("train", [True, False])
def test_gradients_match_finite_differences(rng, train):
    a, b = rng.standard_normal((2, 3, 5, 5))
    c = rng.standard_normal((3, 5, 5))
    base = FusionBlockParams(w=[0.7, -0.4], gamma=1.3, beta=0.2, running_mean=0.1, running_var=0.8)

    def loss(p, a=a, b=b):
        y, _ = forward(a, b, p.copy(), train=train)
        return float(np.sum(c * y))

    y, cache = forward(a, b, base.copy(), train=train)
    g = backward(c, base, cache)
    h = 1e-6

    def fd(mutate):
        hi, lo = base.copy(), base.copy()
        mutate(hi, h)
        mutate(lo, -h)
        return (loss(hi) - loss(lo)) / (2 * h)

    for i in range(2):
        def bump(p, d, i=i):
            p.w[i] += d
        assert rel_err(g["w"][i], fd(bump)) < 1e-6
    for name in ("gamma", "beta"):
        def bump(p, d, name=name):
            setattr(p, name, getattr(p, name) + d)
        assert rel_err(g[name], fd(bump)) < 1e-6
    for key, arr in (("a", a), ("b", b)):
        idx = (1, 2, 3)
        hi, lo = arr.copy(), arr.copy()
        hi[idx] += h
        lo[idx] -= h
        kw_hi = {key: hi}
        kw_lo = {key: lo}
        num = (loss(base, **kw_hi) - loss(base, **kw_lo)) / (2 * h)
        assert rel_err(g[key][idx], num) < 1e-6


def test_frozen_round_trip_is_bit_identical(tmp_path, rng):
    p = FusionBlockParams(
        w=[0.18, -0.12], gamma=1.1, beta=0.05, running_mean=0.013, running_var=0.77, variant="lfws"
    )
    export_frozen(p, tmp_path / "block.json")
    q = import_frozen(tmp_path / "block.json")
    assert q.frozen
    a, b = rng.standard_normal((2, 4, 8, 8))
    assert np.array_equal(fuse_forward(a, b, p), fuse_forward(a, b, q))
    assert dumps_frozen(q) == dumps_frozen(p)


def test_frozen_rejects_training(tmp_path):
    export_frozen(LFWS, tmp_path / "b.json")
    q = import_frozen(tmp_path / "b.json")
    with pytest.raises(FrozenViolation):
        fuse_forward(np.ones((1, 2, 2)), np.ones((1, 2, 2)), q, mode="train")


def test_import_rejects_three_weights(tmp_path):
    doc = json.loads(dumps_frozen(LFWS))
    doc["w"] = [0.1, 0.2, 0.3]
    (tmp_path / "b.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        import_frozen(tmp_path / "b.json")


@pytest.mark.parametrize("mutation", [{"version": 2}, {"eps": "x"}, {"gamma": None}])
def test_import_rejects_malformed(tmp_path, mutation):
    doc = json.loads(dumps_frozen(LFWS)) | mutation
    (tmp_path / "b.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        import_frozen(tmp_path / "b.json")


def test_param_count_examples():
    assert count_additional_params() == 292
    assert param_breakdown() == {"first_conv": 288, "mixer": 2, "bn_affine": 2}
    assert count_additional_params(extra_input_channels=0, mixer_inputs=2) == 4
    assert count_additional_params(first_conv_out=1, kernel=(1, 1), extra_input_channels=1, mixer_inputs=2) == 5
