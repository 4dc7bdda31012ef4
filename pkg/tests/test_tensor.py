import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fusecue.errors import FormatError, InvalidShape, InvalidSpec
from fusecue.tensor import (
    CueChannel,
    CueKind,
    ImageTensor,
    NormalizationSpec,
    decode_image,
    decode_tensor,
    denormalize,
    encode_image,
    encode_tensor,
    normalize,
    read_image,
    read_tensor,
    to_grayscale,
    write_image,
    write_tensor,
)


def uniform_rgb(r, g, b, h=4, w=5):
    return ImageTensor(np.stack([np.full((h, w), v, np.float32) for v in (r, g, b)]))


class TestImageTensor:
    def test_rank_and_finiteness_enforced(self):
        with pytest.raises(InvalidShape):
            ImageTensor(np.zeros((2, 2), np.float32))
        with pytest.raises(ValueError):
            ImageTensor(np.array([[[np.nan]]], np.float32))

    def test_data_is_read_only_float32(self):
        t = ImageTensor(np.ones((1, 2, 2)))
        assert t.data.dtype == np.float32
        with pytest.raises(ValueError):
            t.data[0, 0, 0] = 5

    def test_cue_channel_must_be_single_channel(self):
        with pytest.raises(InvalidShape):
            CueChannel(np.zeros((2, 3, 3)), kind=CueKind.WDF)


class TestGrayscale:
    def test_white_stays_white(self):
        assert np.all(to_grayscale(uniform_rgb(1, 1, 1)).data == 1.0)

    def test_pure_red_gives_red_weight(self):
        np.testing.assert_allclose(to_grayscale(uniform_rgb(1, 0, 0)).data, 0.299, rtol=0, atol=1e-7)

    def test_gray_is_fixed_point(self):
        assert np.all(to_grayscale(uniform_rgb(0.5, 0.5, 0.5)).data == 0.5)

    def test_wrong_channel_count(self):
        with pytest.raises(InvalidShape):
            to_grayscale(ImageTensor(np.zeros((2, 3, 3))))

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float32, (3, 4, 4), elements=st.floats(0, 1, width=32)))
    def test_within_channel_range(self, x):
        g = to_grayscale(ImageTensor(x)).data[0]
        assert np.all(g >= x.min(axis=0)) and np.all(g <= x.max(axis=0))


class TestNormalize:
    @pytest.mark.parametrize("x,y", [(0.5, 0.0), (1.0, 1.0), (0.25, -0.5)])
    def test_examples(self, x, y):
        assert normalize(ImageTensor(np.full((1, 1, 1), x))).data[0, 0, 0] == y

    def test_sigma_must_be_positive(self):
        with pytest.raises(InvalidSpec):
            NormalizationSpec(0.5, 0.0)

    def test_round_trip(self, rng):
        x = ImageTensor(rng.random((3, 8, 8)))
        y = normalize(x)
        assert y.data.min() >= -1 and y.data.max() <= 1
        np.testing.assert_allclose(denormalize(y).data, x.data, atol=1e-6)


class TestTensorFile:
    def test_round_trip_example(self, tmp_path):
        t = ImageTensor(np.array([1, 2, 3, 4], np.float32).reshape(1, 2, 2))
        write_tensor(tmp_path / "t.fct", t)
        assert read_tensor(tmp_path / "t.fct") == t

    def test_layout(self):
        t = ImageTensor(np.arange(6, dtype=np.float32).reshape(1, 2, 3))
        buf = encode_tensor(t)
        assert buf[:4] == b"FCT1"
        assert struct.unpack("<IIII", buf[4:20]) == (3, 1, 2, 3)
        assert np.frombuffer(buf[20:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]

    def test_bad_magic(self):
        buf = bytearray(encode_tensor(ImageTensor(np.ones((1, 1, 1)))))
        buf[:4] = b"XXXX"
        with pytest.raises(FormatError):
            decode_tensor(bytes(buf))

    def test_truncated(self):
        buf = encode_tensor(ImageTensor(np.ones((1, 2, 2))))
        with pytest.raises(FormatError):
            decode_tensor(buf[:-1])

    def test_empty_rejected(self):
        with pytest.raises(FormatError):
            decode_tensor(struct.pack("<4sIIII", b"FCT1", 3, 0, 0, 0))

    @settings(max_examples=100, deadline=None)
    @given(
        arrays(
            np.float32,
            st.tuples(st.integers(1, 3), st.integers(1, 6), st.integers(1, 6)),
            elements=st.floats(allow_nan=False, allow_infinity=False, width=32),
        )
    )
    def test_bit_identical_round_trip(self, x):
        back = decode_tensor(encode_tensor(ImageTensor(x)))
        assert back.data.tobytes() == x.tobytes()


class TestImages:
    def test_pgm_and_ppm(self, tmp_path, rng):
        gray = ImageTensor(np.round(rng.random((1, 5, 7)) * 255) / 255)
        rgb = ImageTensor(np.round(rng.random((3, 4, 3)) * 255) / 255)
        write_image(tmp_path / "g.pgm", gray)
        write_image(tmp_path / "c.ppm", rgb)
        g2, c2 = read_image(tmp_path / "g.pgm"), read_image(tmp_path / "c.ppm")
        assert g2.shape == (1, 5, 7) and c2.shape == (3, 4, 3)
        np.testing.assert_allclose(g2.data, gray.data, atol=1e-7)
        np.testing.assert_allclose(c2.data, rgb.data, atol=1e-7)

    def test_header_comments(self):
        img = decode_image(b"P5\n# comment\n2 1\n255\n\x00\xff")
        assert img.data.tolist() == [[[0.0, 1.0]]]

    @pytest.mark.parametrize("buf", [b"P2\n1 1\n255\n0", b"P5\n1 1\n65535\n\x00\x00", b"P5\n2 2\n255\n\x00"])
    def test_unsupported(self, buf):
        with pytest.raises(FormatError):
            decode_image(buf)

    def test_encode_rejects_two_channels(self):
        with pytest.raises(InvalidShape):
            encode_image(ImageTensor(np.zeros((2, 2, 2))))
