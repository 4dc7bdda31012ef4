"""Image tensors, grayscale/range conversion and file I/O.

Every image, cue map and activation that crosses a module boundary is an
:class:`ImageTensor`: a read-only ``float32`` array laid out channel-planar,
row-major as ``(C, H, W)``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import write_bytes_atomic
from .errors import FormatError, InvalidShape, InvalidSpec

FCT_MAGIC = b"FCT1"
_HEADER = struct.Struct("<4sIIII")

# ITU-R BT.601 luma
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class ImageTensor:
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, copy=True)
        if arr.ndim != 3:
            raise InvalidShape(f"ImageTensor needs rank 3 (C, H, W), got shape {arr.shape}")
        if arr.size == 0:
            raise InvalidShape(f"empty tensor {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidSpec("ImageTensor values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def plane(self, c: int = 0) -> np.ndarray:
        """Channel ``c`` as a float64 working copy."""
        return self.data[c].astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, ImageTensor):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(
            self.data.view(np.uint32), other.data.view(np.uint32)
        )

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"


class CueKind(str, enum.Enum):
    WDF = "wdf"
    LBP = "lbp"
    PHASE = "phase"


@dataclass(frozen=True, eq=False)
class CueChannel(ImageTensor):
    """Single-channel :class:`ImageTensor` tagged with the cue that produced it."""

    kind: CueKind = field(default=CueKind.WDF)

    def __post_init__(self):
        super().__post_init__()
        if self.channels != 1:
            raise InvalidShape(f"a cue channel has exactly one plane, got {self.channels}")
        object.__setattr__(self, "kind", CueKind(self.kind))


@dataclass(frozen=True)
class NormalizationSpec:
    mu: float = 0.5
    sigma: float = 0.5

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidSpec(f"sigma must be positive, got {self.sigma}")


def as_tensor(x) -> ImageTensor:
    if isinstance(x, ImageTensor):
        return x
    arr = np.asarray(x)
    if arr.ndim == 2:
        arr = arr[None]
    return ImageTensor(arr)


def to_grayscale(img: ImageTensor) -> ImageTensor:
    img = as_tensor(img)
    if img.channels != 3:
        raise InvalidShape(f"to_grayscale expects 3 channels, got {img.channels}")
    rgb = img.data.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    gray = r * rgb[0] + g * rgb[1] + b * rgb[2]
    # the weights sum to 1 in exact arithmetic only
    lo = rgb.min(axis=0)
    hi = rgb.max(axis=0)
    return ImageTensor(np.clip(gray, lo, hi)[None])


def normalize(img: ImageTensor, spec: NormalizationSpec = NormalizationSpec()) -> ImageTensor:
    img = as_tensor(img)
    if not spec.sigma > 0:
        raise InvalidSpec(f"sigma must be positive, got {spec.sigma}")
    return ImageTensor((img.data.astype(np.float64) - spec.mu) / spec.sigma)


def denormalize(img: ImageTensor, spec: NormalizationSpec = NormalizationSpec()) -> ImageTensor:
    img = as_tensor(img)
    return ImageTensor(img.data.astype(np.float64) * spec.sigma + spec.mu)


def encode_tensor(t: ImageTensor) -> bytes:
    c, h, w = t.shape
    return _HEADER.pack(FCT_MAGIC, 3, c, h, w) + t.data.astype("<f4", copy=False).tobytes(order="C")


def decode_tensor(buf: bytes) -> ImageTensor:
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header ({len(buf)} bytes)")
    magic, rank, c, h, w = _HEADER.unpack_from(buf)
    if magic != FCT_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if rank != 3:
        raise FormatError(f"unsupported rank {rank}")
    n = c * h * w
    if n == 0:
        raise FormatError(f"empty tensor {c}x{h}x{w}")
    expected = _HEADER.size + 4 * n
    if len(buf) != expected:
        raise FormatError(f"payload is {len(buf) - _HEADER.size} bytes, expected {4 * n}")
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=_HEADER.size).reshape(c, h, w)
    if not np.all(np.isfinite(data)):
        raise FormatError("tensor file holds non-finite values")
    return ImageTensor(data)


def write_tensor(path, t: ImageTensor) -> None:
    t = as_tensor(t)
    write_bytes_atomic(path, encode_tensor(t))


def read_tensor(path) -> ImageTensor:
    return decode_tensor(Path(path).read_bytes())


def _pnm_fields(buf: bytes, count: int, pos: int) -> tuple[list[int], int]:
    values = []
    while len(values) < count:
        while pos < len(buf) and (buf[pos : pos + 1].isspace() or buf[pos : pos + 1] == b"#"):
            if buf[pos : pos + 1] == b"#":
                pos = buf.index(b"\n", pos)
            pos += 1
        start = pos
        while pos < len(buf) and buf[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PNM header")
        values.append(int(buf[start:pos]))
    # exactly one whitespace byte separates the header from the raster
    return values, pos + 1


def decode_image(buf: bytes) -> ImageTensor:
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported image magic {magic!r}; only binary PGM (P5) and PPM (P6)")
    (w, h, maxval), pos = _pnm_fields(buf, 3, 2)
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 8-bit images")
    c = 1 if magic == b"P5" else 3
    n = w * h * c
    if n == 0:
        raise FormatError("empty image")
    raster = buf[pos : pos + n]
    if len(raster) != n:
        raise FormatError(f"truncated raster: {len(raster)} of {n} bytes")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, c)
    return ImageTensor(pixels.transpose(2, 0, 1).astype(np.float64) / 255.0)


def read_image(path) -> ImageTensor:
    return decode_image(Path(path).read_bytes())


def encode_image(img: ImageTensor) -> bytes:
    img = as_tensor(img)
    if img.channels not in (1, 3):
        raise InvalidShape(f"PNM output needs 1 or 3 channels, got {img.channels}")
    pixels = np.rint(np.clip(img.data.astype(np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + pixels.transpose(1, 2, 0).tobytes()


def write_image(path, img: ImageTensor) -> None:
    write_bytes_atomic(path, encode_image(img))
