"""Stochastic training-time augmentation of RGB frames in [0, 1].

Five transforms run in a fixed order, each independently with probability
``p_each``: horizontal flip, rotation, Gaussian blur, brightness/contrast,
JPEG compression. Coin flips for all five are drawn first, then the
parameters of the transforms that fire, so a given generator state always
yields the same output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec, InvalidShape
from .tensor import ImageTensor, as_tensor

TRANSFORMS = ("flip", "rotate", "blur", "color", "jpeg")

# ITU-T T.81 Annex K, tables K.1 and K.2
LUMA_QTABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
CHROMA_QTABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class AugmentConfig:
    p_each: float = 0.5
    max_rotation: float = 10.0
    blur_kernels: tuple[int, ...] = (3, 5, 7)
    brightness: float = 0.1
    contrast: float = 0.1
    jpeg_quality: tuple[int, int] = (40, 100)
    seed: int = 1024

    def __post_init__(self):
        if not 0.0 <= self.p_each <= 1.0:
            raise InvalidSpec(f"p_each must be a probability, got {self.p_each}")
        if not self.blur_kernels or any(k < 1 or k % 2 == 0 for k in self.blur_kernels):
            raise InvalidSpec(f"blur kernels must be odd and positive, got {self.blur_kernels}")
        lo, hi = self.jpeg_quality
        if not 1 <= lo <= hi <= 100:
            raise InvalidSpec(f"JPEG quality range must lie in [1, 100], got {self.jpeg_quality}")
        if self.max_rotation < 0 or self.brightness < 0 or self.contrast < 0:
            raise InvalidSpec("rotation, brightness and contrast ranges must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        d = dict(d)
        for key in ("blur_kernels", "jpeg_quality"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "p_each": self.p_each,
            "max_rotation": self.max_rotation,
            "blur_kernels": list(self.blur_kernels),
            "brightness": self.brightness,
            "contrast": self.contrast,
            "jpeg_quality": list(self.jpeg_quality),
            "seed": self.seed,
        }


def hflip(x: np.ndarray) -> np.ndarray:
    return x[..., ::-1].copy()


def _reflect_coords(u: np.ndarray, n: int) -> np.ndarray:
    # half-sample symmetric extension onto [-0.5, n - 0.5]
    period = 2 * n
    v = np.mod(u + 0.5, period)
    v = np.where(v > n, period - v, v)
    return v - 0.5


def rotate(x: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate (C, H, W) counter-clockwise about the centre, bilinear, reflect-padded."""
    c, h, w = x.shape
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64) - cy, np.arange(w, dtype=np.float64) - cx, indexing="ij")
    # inverse map: output pixel -> source location
    sx = cos_t * xx - sin_t * yy + cx
    sy = sin_t * xx + cos_t * yy + cy
    sy = _reflect_coords(sy, h)
    sx = _reflect_coords(sx, w)
    y0 = np.floor(sy)
    x0 = np.floor(sx)
    fy = sy - y0
    fx = sx - x0
    # the extension repeats the edge pixel, so clamping indices matches it
    y0i = np.clip(y0.astype(np.intp), 0, h - 1)
    x0i = np.clip(x0.astype(np.intp), 0, w - 1)
    y1i = np.clip(y0.astype(np.intp) + 1, 0, h - 1)
    x1i = np.clip(x0.astype(np.intp) + 1, 0, w - 1)
    top = (1 - fx) * x[:, y0i, x0i] + fx * x[:, y0i, x1i]
    bottom = (1 - fx) * x[:, y1i, x0i] + fx * x[:, y1i, x1i]
    return (1 - fy) * top + fy * bottom


def gaussian_kernel(k: int) -> np.ndarray:
    sigma = 0.3 * ((k - 1) / 2 - 1) + 0.8
    r = np.arange(k, dtype=np.float64) - (k - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def gaussian_blur(x: np.ndarray, k: int) -> np.ndarray:
    """Separable blur with half-sample symmetric borders (keeps the mean)."""
    g = gaussian_kernel(k)
    r = k // 2
    c, h, w = x.shape
    if r >= h or r >= w:
        raise InvalidShape(f"blur kernel {k} too large for {h}x{w} image")
    p = np.pad(x, ((0, 0), (r, r), (0, 0)), mode="symmetric")
    tmp = sum(g[i] * p[:, i : i + h, :] for i in range(k))
    p = np.pad(tmp, ((0, 0), (0, 0), (r, r)), mode="symmetric")
    return sum(g[i] * p[:, :, i : i + w] for i in range(k))


def brightness_contrast(x: np.ndarray, u: float, v: float) -> np.ndarray:
    y = x * (1.0 + u)
    mean = y.mean()
    return (y - mean) * (1.0 + v) + mean


def _dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    m[0] /= math.sqrt(2.0)
    return m


DCT8 = _dct_matrix()


def scaled_qtable(table: np.ndarray, quality: int) -> np.ndarray:
    """IJG quality scaling of a base quantisation table."""
    quality = int(min(max(quality, 1), 100))
    scale = 5000 / quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((table * scale + 50) / 100), 1, 255)


def _rgb_to_ycbcr(rgb):
    r, g, b = rgb
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128
    return np.stack([y, cb, cr])


def _ycbcr_to_rgb(ycc):
    y, cb, cr = ycc[0], ycc[1] - 128, ycc[2] - 128
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b])


def jpeg_compress(x: np.ndarray, quality: int) -> np.ndarray:
    """Simulated baseline JPEG: YCbCr, 8x8 DCT, quantise, dequantise, inverse.

    No chroma subsampling and no entropy coding; the decoded result is
    rounded to 8-bit levels like a real decoder.
    """
    c, h, w = x.shape
    if c != 3:
        raise InvalidShape(f"JPEG simulation expects RGB, got {c} channels")
    ph, pw = -h % 8, -w % 8
    rgb = np.pad(x * 255.0, ((0, 0), (0, ph), (0, pw)), mode="edge")
    ycc = _rgb_to_ycbcr(rgb) - 128.0
    H, W = rgb.shape[1:]
    blocks = ycc.reshape(3, H // 8, 8, W // 8, 8).transpose(0, 1, 3, 2, 4)
    coef = DCT8 @ blocks @ DCT8.T
    q = np.stack([scaled_qtable(LUMA_QTABLE, quality)] + [scaled_qtable(CHROMA_QTABLE, quality)] * 2)
    q = q[:, None, None]
    coef = np.round(coef / q) * q
    blocks = DCT8.T @ coef @ DCT8
    ycc = blocks.transpose(0, 1, 3, 2, 4).reshape(3, H, W) + 128.0
    out = np.clip(np.round(_ycbcr_to_rgb(ycc)), 0, 255) / 255.0
    return out[:, :h, :w]


def draw_plan(cfg: AugmentConfig, rng: np.random.Generator) -> dict:
    """Decide which transforms fire and with which parameters."""
    coins = rng.random(len(TRANSFORMS)) < cfg.p_each
    plan = {}
    for name, fire in zip(TRANSFORMS, coins):
        if not fire:
            continue
        if name == "flip":
            plan[name] = True
        elif name == "rotate":
            plan[name] = float(rng.uniform(-cfg.max_rotation, cfg.max_rotation))
        elif name == "blur":
            plan[name] = int(cfg.blur_kernels[rng.integers(len(cfg.blur_kernels))])
        elif name == "color":
            plan[name] = (
                float(rng.uniform(-cfg.brightness, cfg.brightness)),
                float(rng.uniform(-cfg.contrast, cfg.contrast)),
            )
        else:
            lo, hi = cfg.jpeg_quality
            plan[name] = int(rng.integers(lo, hi + 1))
    return plan


def apply_plan(img: ImageTensor, plan: dict) -> ImageTensor:
    img = as_tensor(img)
    if not plan:
        return img
    x = img.data.astype(np.float64)
    if "flip" in plan:
        x = hflip(x)
    if "rotate" in plan:
        x = rotate(x, plan["rotate"])
    if "blur" in plan:
        x = gaussian_blur(x, plan["blur"])
    if "color" in plan:
        x = brightness_contrast(x, *plan["color"])
    x = np.clip(x, 0.0, 1.0)
    if "jpeg" in plan:
        x = jpeg_compress(x, plan["jpeg"])
    return ImageTensor(x)


def augment(img: ImageTensor, cfg: AugmentConfig = AugmentConfig(), rng=None) -> ImageTensor:
    """Augment one RGB frame. ``rng`` is a Generator or an integer seed."""
    img = as_tensor(img)
    if img.channels != 3:
        raise InvalidShape(f"augment expects an RGB frame, got {img.channels} channels")
    if rng is None:
        rng = cfg.seed
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return apply_plan(img, draw_plan(cfg, rng))
