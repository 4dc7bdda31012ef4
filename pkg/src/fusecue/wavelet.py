"""Orthonormal 2-D Haar transform and the wavelet-denoised feature (WDF).

One analysis level maps each 2x2 block ``[[a, b], [c, d]]`` to::

    LL = (a + b + c + d) / 2      LH = (a + b - c - d) / 2
    HL = (a - b + c - d) / 2      HH = (a - b - c + d) / 2

so ``LH`` is lowpass along rows and highpass along columns (it responds to
vertical changes). Odd-sized planes are padded by repeating the last row or
column before analysis and cropped back after synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidShape
from .tensor import CueChannel, CueKind, ImageTensor, as_tensor

DEFAULT_LEVELS = 3


@dataclass
class WaveletLevel:
    LL: np.ndarray
    LH: np.ndarray
    HL: np.ndarray
    HH: np.ndarray
    # shape of the plane this level analysed, before padding
    source_shape: tuple[int, int]


@dataclass
class WaveletPyramid:
    """Detail planes for every level plus the final approximation.

    ``levels[0]`` is the finest level. Only the coarsest level's ``LL`` is
    needed for synthesis; the intermediate ``LL`` planes are kept for
    inspection.
    """

    levels: list[WaveletLevel]

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.levels[0].source_shape

    @property
    def approximation(self) -> np.ndarray:
        return self.levels[-1].LL

    def coefficients(self) -> list[np.ndarray]:
        out = [self.approximation]
        for lvl in self.levels:
            out.extend((lvl.LH, lvl.HL, lvl.HH))
        return out

    def zero_details(self) -> "WaveletPyramid":
        return WaveletPyramid(
            [
                WaveletLevel(
                    lvl.LL,
                    np.zeros_like(lvl.LH),
                    np.zeros_like(lvl.HL),
                    np.zeros_like(lvl.HH),
                    lvl.source_shape,
                )
                for lvl in self.levels
            ]
        )


def _pad_even(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    if h % 2 or w % 2:
        x = np.pad(x, ((0, h % 2), (0, w % 2)), mode="symmetric")
    return x


def haar_analysis(x: np.ndarray):
    """One orthonormal Haar level of an even-sized float64 plane."""
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    s_top, d_top = a + b, a - b
    s_bot, d_bot = c + d, c - d
    return (
        (s_top + s_bot) * 0.5,
        (s_top - s_bot) * 0.5,
        (d_top + d_bot) * 0.5,
        (d_top - d_bot) * 0.5,
    )


def haar_synthesis(LL, LH, HL, HH) -> np.ndarray:
    s_top, s_bot = LL + LH, LL - LH
    d_top, d_bot = HL + HH, HL - HH
    h, w = LL.shape
    out = np.empty((2 * h, 2 * w), dtype=np.float64)
    out[0::2, 0::2] = (s_top + d_top) * 0.5
    out[0::2, 1::2] = (s_top - d_top) * 0.5
    out[1::2, 0::2] = (s_bot + d_bot) * 0.5
    out[1::2, 1::2] = (s_bot - d_bot) * 0.5
    return out


def _plane(img) -> np.ndarray:
    if isinstance(img, np.ndarray) and img.ndim == 2:
        return img.astype(np.float64)
    img = as_tensor(img)
    if img.channels != 1:
        raise InvalidShape(f"wavelet transform expects one channel, got {img.channels}")
    return img.plane(0)


def dwt2(img, levels: int = DEFAULT_LEVELS) -> WaveletPyramid:
    if levels < 1:
        raise InvalidShape(f"levels must be >= 1, got {levels}")
    x = _plane(img)
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise InvalidShape(f"image {x.shape} is smaller than 2x2")
    out = []
    for _ in range(levels):
        src = x.shape
        LL, LH, HL, HH = haar_analysis(_pad_even(x))
        out.append(WaveletLevel(LL, LH, HL, HH, src))
        x = LL
    return WaveletPyramid(out)


def idwt2_plane(pyr: WaveletPyramid) -> np.ndarray:
    x = pyr.approximation
    for lvl in reversed(pyr.levels):
        if not (x.shape == lvl.LH.shape == lvl.HL.shape == lvl.HH.shape):
            raise InvalidShape(
                f"plane shapes disagree: LL {x.shape}, LH {lvl.LH.shape}, "
                f"HL {lvl.HL.shape}, HH {lvl.HH.shape}"
            )
        h, w = lvl.source_shape
        if (h + 1) // 2 != x.shape[0] or (w + 1) // 2 != x.shape[1]:
            raise InvalidShape(f"level planes {x.shape} do not fit source {lvl.source_shape}")
        x = haar_synthesis(x, lvl.LH, lvl.HL, lvl.HH)[:h, :w]
    return x


def idwt2(pyr: WaveletPyramid) -> ImageTensor:
    return ImageTensor(idwt2_plane(pyr)[None])


def minmax_rescale(x: np.ndarray) -> np.ndarray:
    """Affine map onto [-1, 1]; a constant plane maps to all zeros."""
    lo = x.min()
    hi = x.max()
    if hi == lo:
        return np.zeros_like(x)
    y = np.clip((x - lo) * (2.0 / (hi - lo)) - 1.0, -1.0, 1.0)
    y[x == hi] = 1.0
    return y


def wdf_plane(x: np.ndarray, levels: int = DEFAULT_LEVELS) -> np.ndarray:
    """Approximation-only reconstruction, before rescaling."""
    return idwt2_plane(dwt2(x, levels).zero_details())


def wdf(img, levels: int = DEFAULT_LEVELS) -> CueChannel:
    return CueChannel(minmax_rescale(wdf_plane(_plane(img), levels))[None], kind=CueKind.WDF)
